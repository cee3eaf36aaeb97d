#include "plexitrace/attribution.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "plexitrace/error.hpp"

namespace plexitrace {

std::string_view category_name(Category c) {
  switch (c) {
    case Category::kSth: return "STH";
    case Category::kMem: return "MEM";
    case Category::kSeg: return "SEG";
    case Category::kFet: return "FET";
  }
  return "?";
}

std::optional<Category> parse_category(std::string_view name) {
  for (Category c : kAllCategories) {
    if (category_name(c) == name) return c;
  }
  return std::nullopt;
}

Category categorize(std::uint64_t count, const AnalysisConfig& cfg) {
  if (count == 0) return Category::kSth;
  if (count < cfg.mem_upper) return Category::kMem;
  if (count < cfg.seg_upper) return Category::kSeg;
  return Category::kFet;  // c == seg_upper lands here
}

double standalone_log2_perplexity(const LanguageModel& model, std::span<const TokenId> tokens) {
  if (tokens.empty()) throw Error(ErrorCode::kInvalidArgument, "standalone perplexity of an empty window");
  const auto probs = model.score(tokens, {});
  double bits = 0.0;
  for (double p : probs) bits += log2_token_perplexity(p);
  return bits / static_cast<double>(tokens.size());
}

double standalone_perplexity(const LanguageModel& model, std::span<const TokenId> tokens) {
  return std::exp2(standalone_log2_perplexity(model, tokens));
}

WindowAttribution attribute_window(const SuffixIndex& index, const LanguageModel& scorer, const Window& window,
                                   const AnalysisConfig& cfg) {
  WindowAttribution a;
  a.window = window;
  a.match.count = index.count(window.tokens);
  if (a.match.count > 0 && cfg.max_sample_occurrences > 0) {
    a.match.sample_occurrences = index.locate(window.tokens, cfg.max_sample_occurrences);
  }
  a.category = categorize(a.match.count, cfg);
  a.log2_standalone_ppl = standalone_log2_perplexity(scorer, window.tokens);
  return a;
}

std::vector<WindowAttribution> attribute_record(const SuffixIndex& index, const LanguageModel& scorer,
                                                const GenerationRecord& record, const AnalysisConfig& cfg) {
  std::vector<WindowAttribution> out;
  for (const auto& w : record_windows(record, cfg)) out.push_back(attribute_window(index, scorer, w, cfg));
  return out;
}

std::string attribution_to_jsonl(const WindowAttribution& a) {
  nlohmann::ordered_json occ = nlohmann::ordered_json::array();
  for (const auto& o : a.match.sample_occurrences) {
    occ.push_back(nlohmann::ordered_json{{"doc_id", o.doc_id}, {"offset", o.offset}});
  }
  return nlohmann::ordered_json{{"record_id", a.window.record_id},
                                {"topic", a.window.topic},
                                {"tokens", a.window.tokens},
                                {"c", a.match.count},
                                {"category", category_name(a.category)},
                                {"log2_standalone_ppl", a.log2_standalone_ppl},
                                {"is_prompt_repetition", a.window.is_prompt_repetition},
                                {"occurrences", std::move(occ)},
                                {"span_start", a.window.span_start},
                                {"span_len", a.window.span_len},
                                {"window_offset", a.window.offset}}
      .dump();
}

WindowAttribution attribution_from_jsonl(std::string_view line) {
  try {
    const auto j = nlohmann::json::parse(line);
    WindowAttribution a;
    a.window.record_id = j.at("record_id").get<std::string>();
    a.window.topic = j.value("topic", std::string{});
    a.window.tokens = j.at("tokens").get<std::vector<TokenId>>();
    a.window.is_prompt_repetition = j.value("is_prompt_repetition", false);
    a.window.span_start = j.value("span_start", std::size_t{0});
    a.window.span_len = j.value("span_len", a.window.tokens.size());
    a.window.offset = j.value("window_offset", std::size_t{0});
    a.match.count = j.at("c").get<std::uint64_t>();
    for (const auto& o : j.value("occurrences", nlohmann::json::array())) {
      // global_pos is not serialized; it is recoverable from the index.
      a.match.sample_occurrences.push_back(
          Occurrence{o.at("doc_id").get<std::uint64_t>(), o.at("offset").get<std::uint64_t>(), 0});
    }
    const auto cat = parse_category(j.at("category").get<std::string>());
    if (!cat) throw Error(ErrorCode::kInvalidArgument, "unknown category in attribution line");
    a.category = *cat;
    const auto& ppl = j.at("log2_standalone_ppl");
    a.log2_standalone_ppl = ppl.is_null() ? NAN : ppl.get<double>();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad attribution line: ") + e.what());
  }
}

}  // namespace plexitrace
