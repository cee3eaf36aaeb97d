#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plexitrace/lm_provider.hpp"

namespace plexitrace {

enum class RepetitionMode { kWindowInPrompt };

struct AnalysisConfig {
  double prob_threshold = 0.9;  // log2 P <= 0.152
  std::uint32_t window_size = 6;
  std::uint32_t min_span_len = 6;
  std::uint64_t mem_upper = 5;
  std::uint64_t seg_upper = 50;
  RepetitionMode repetition_mode = RepetitionMode::kWindowInPrompt;
  std::uint32_t max_sample_occurrences = 10;

  /// Throws InvalidArgument on violated invariants.
  void validate() const;
};

struct LowPerplexitySpan {
  std::string record_id;
  std::string topic;
  std::size_t start = 0;  // offset into record.output
  std::vector<ScoredToken> tokens;

  std::size_t length() const { return tokens.size(); }
};

struct Window {
  std::string record_id;
  std::string topic;
  std::size_t span_start = 0;
  std::size_t span_len = 0;
  std::size_t offset = 0;  // within the span
  std::vector<TokenId> tokens;
  bool is_prompt_repetition = false;

  std::size_t output_position() const { return span_start + offset; }
};

/// Maximal runs of generated tokens with prob >= threshold and length >=
/// min_span_len, in positional order.
std::vector<LowPerplexitySpan> extract_spans(const GenerationRecord& record, const AnalysisConfig& cfg);

/// All L - w + 1 stride-1 windows. Repetition flags are left false.
/// Errors: SpanTooShort.
std::vector<Window> windows(const LowPerplexitySpan& span, const AnalysisConfig& cfg);

/// True iff `window` occurs contiguously inside `prompt`.
bool is_prompt_repetition(std::span<const TokenId> window, std::span<const TokenId> prompt);

/// extract_spans + windows for one record, with prompt-repetition flags set.
std::vector<Window> record_windows(const GenerationRecord& record, const AnalysisConfig& cfg);

struct Degeneration {
  std::size_t period = 0;
  std::size_t start = 0;
  std::size_t repeats = 0;

  bool operator==(const Degeneration&) const = default;
};

/// First position from which some block of period in [min_period,
/// max_period] repeats back to back at least min_repeats times. The smallest
/// such period is reported, with its full repeat count.
std::optional<Degeneration> detect_degeneration(std::span<const TokenId> tokens, std::size_t min_period = 1,
                                                std::size_t max_period = 50, std::size_t min_repeats = 3);
std::optional<Degeneration> detect_degeneration(const GenerationRecord& record, std::size_t min_period = 1,
                                                std::size_t max_period = 50, std::size_t min_repeats = 3);

struct LengthStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;  // population
};

LengthStats length_stats(std::span<const std::size_t> lengths);

/// Per-topic mean and population standard deviation of span lengths.
std::map<std::string, LengthStats> span_length_stats(const std::map<std::string, std::vector<std::size_t>>& by_topic);

/// {"record_id","topic","span_start","span_len","window_offset","tokens","is_prompt_repetition"}
std::string window_to_jsonl(const Window& w);

}  // namespace plexitrace
