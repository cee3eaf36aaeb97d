#include "plexitrace/spans.hpp"

#include <algorithm>
#include <cmath>
#include <nlohmann/json.hpp>

#include "plexitrace/error.hpp"

namespace plexitrace {

void AnalysisConfig::validate() const {
  if (!(prob_threshold > 0.0 && prob_threshold <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "prob_threshold must be in (0, 1]");
  }
  if (window_size < 1) throw Error(ErrorCode::kInvalidArgument, "window_size must be >= 1");
  if (min_span_len < window_size) throw Error(ErrorCode::kInvalidArgument, "min_span_len must be >= window_size");
  if (!(0 < mem_upper && mem_upper < seg_upper)) {
    throw Error(ErrorCode::kInvalidArgument, "thresholds must satisfy 0 < mem_upper < seg_upper");
  }
}

std::vector<LowPerplexitySpan> extract_spans(const GenerationRecord& record, const AnalysisConfig& cfg) {
  cfg.validate();
  std::vector<LowPerplexitySpan> spans;
  const auto& out = record.output;
  std::size_t i = 0;
  while (i < out.size()) {
    if (out[i].prob < cfg.prob_threshold) {
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < out.size() && out[j].prob >= cfg.prob_threshold) ++j;
    if (j - i >= cfg.min_span_len) {
      spans.push_back(LowPerplexitySpan{record.record_id, record.topic, i,
                                        {out.begin() + static_cast<std::ptrdiff_t>(i),
                                         out.begin() + static_cast<std::ptrdiff_t>(j)}});
    }
    i = j;
  }
  return spans;
}

std::vector<Window> windows(const LowPerplexitySpan& span, const AnalysisConfig& cfg) {
  const std::size_t w = cfg.window_size;
  if (w == 0 || span.length() < w) {
    throw Error(ErrorCode::kSpanTooShort, "span of " + std::to_string(span.length()) + " tokens, window size " +
                                              std::to_string(w));
  }
  std::vector<Window> out;
  out.reserve(span.length() - w + 1);
  for (std::size_t off = 0; off + w <= span.length(); ++off) {
    Window win;
    win.record_id = span.record_id;
    win.topic = span.topic;
    win.span_start = span.start;
    win.span_len = span.length();
    win.offset = off;
    win.tokens.reserve(w);
    for (std::size_t k = 0; k < w; ++k) win.tokens.push_back(span.tokens[off + k].token);
    out.push_back(std::move(win));
  }
  return out;
}

bool is_prompt_repetition(std::span<const TokenId> window, std::span<const TokenId> prompt) {
  if (window.empty() || prompt.size() < window.size()) return false;
  return std::search(prompt.begin(), prompt.end(), window.begin(), window.end()) != prompt.end();
}

std::vector<Window> record_windows(const GenerationRecord& record, const AnalysisConfig& cfg) {
  std::vector<Window> out;
  for (const auto& span : extract_spans(record, cfg)) {
    for (auto& w : windows(span, cfg)) {
      w.is_prompt_repetition = is_prompt_repetition(w.tokens, record.prompt);
      out.push_back(std::move(w));
    }
  }
  return out;
}

std::optional<Degeneration> detect_degeneration(std::span<const TokenId> tokens, std::size_t min_period,
                                                std::size_t max_period, std::size_t min_repeats) {
  const std::size_t n = tokens.size();
  min_period = std::max<std::size_t>(min_period, 1);
  min_repeats = std::max<std::size_t>(min_repeats, 2);
  for (std::size_t start = 0; start < n; ++start) {
    for (std::size_t p = min_period; p <= max_period && start + p * min_repeats <= n; ++p) {
      std::size_t repeats = 1;
      while (start + (repeats + 1) * p <= n &&
             std::equal(tokens.begin() + static_cast<std::ptrdiff_t>(start),
                        tokens.begin() + static_cast<std::ptrdiff_t>(start + p),
                        tokens.begin() + static_cast<std::ptrdiff_t>(start + repeats * p))) {
        ++repeats;
      }
      if (repeats >= min_repeats) return Degeneration{p, start, repeats};
    }
  }
  return std::nullopt;
}

std::optional<Degeneration> detect_degeneration(const GenerationRecord& record, std::size_t min_period,
                                                std::size_t max_period, std::size_t min_repeats) {
  std::vector<TokenId> toks;
  toks.reserve(record.output.size());
  for (const auto& t : record.output) toks.push_back(t.token);
  return detect_degeneration(toks, min_period, max_period, min_repeats);
}

LengthStats length_stats(std::span<const std::size_t> lengths) {
  LengthStats s;
  s.count = lengths.size();
  if (lengths.empty()) return s;
  double sum = 0.0;
  for (auto l : lengths) sum += static_cast<double>(l);
  s.mean = sum / static_cast<double>(lengths.size());
  double sq = 0.0;
  for (auto l : lengths) sq += (static_cast<double>(l) - s.mean) * (static_cast<double>(l) - s.mean);
  s.stddev = std::sqrt(sq / static_cast<double>(lengths.size()));
  return s;
}

std::map<std::string, LengthStats> span_length_stats(const std::map<std::string, std::vector<std::size_t>>& by_topic) {
  std::map<std::string, LengthStats> out;
  for (const auto& [topic, lengths] : by_topic) out.emplace(topic, length_stats(lengths));
  return out;
}

std::string window_to_jsonl(const Window& w) {
  return nlohmann::ordered_json{{"record_id", w.record_id},
                                {"topic", w.topic},
                                {"span_start", w.span_start},
                                {"span_len", w.span_len},
                                {"window_offset", w.offset},
                                {"tokens", w.tokens},
                                {"is_prompt_repetition", w.is_prompt_repetition}}
      .dump();
}

}  // namespace plexitrace
