#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plexitrace/lm_provider.hpp"
#include "plexitrace/ngram_index.hpp"
#include "plexitrace/spans.hpp"

namespace plexitrace {

// Match-count bands: synthetic coherence (c = 0), memorization
// (0 < c < mem_upper), segmental replication (mem_upper <= c < seg_upper),
// frequently encountered text (c >= seg_upper).
enum class Category { kSth, kMem, kSeg, kFet };

inline constexpr Category kAllCategories[] = {Category::kSth, Category::kMem, Category::kSeg, Category::kFet};

std::string_view category_name(Category c);
std::optional<Category> parse_category(std::string_view name);

Category categorize(std::uint64_t count, const AnalysisConfig& cfg);

struct MatchResult {
  std::uint64_t count = 0;
  std::vector<Occurrence> sample_occurrences;  // min(count, K) lowest positions
};

struct WindowAttribution {
  Window window;
  MatchResult match;
  Category category = Category::kSth;
  double log2_standalone_ppl = 0.0;
};

/// -(1/w) * sum log2 p_i with p = score(tokens, empty context). Errors: InvalidArgument (empty), provider errors.
double standalone_log2_perplexity(const LanguageModel& model, std::span<const TokenId> tokens);

/// 2 raised to standalone_log2_perplexity.
double standalone_perplexity(const LanguageModel& model, std::span<const TokenId> tokens);

WindowAttribution attribute_window(const SuffixIndex& index, const LanguageModel& scorer, const Window& window,
                                   const AnalysisConfig& cfg);

/// Spans, windows and attributions for one record, in positional order.
std::vector<WindowAttribution> attribute_record(const SuffixIndex& index, const LanguageModel& scorer,
                                                const GenerationRecord& record, const AnalysisConfig& cfg);

/// One JSON object per window. Carries span_start/span_len/window_offset in
/// addition to the match fields so span statistics can be rebuilt from it.
std::string attribution_to_jsonl(const WindowAttribution& a);
WindowAttribution attribution_from_jsonl(std::string_view line);

}  // namespace plexitrace
