#include <cmath>
#include <random>

#include "doctest.h"
#include "plexitrace/attribution.hpp"
#include "plexitrace/toy_lm.hpp"
#include "test_support.hpp"

using namespace plexitrace;
using plexitrace::testing::DeterministicProvider;
using plexitrace::testing::error_of;
using plexitrace::testing::FixedProbProvider;
using plexitrace::testing::naive_positions;
using plexitrace::testing::planted_corpus;

using Toks = std::vector<TokenId>;

namespace {

Window window_of(Toks tokens) {
  Window w;
  w.record_id = "r/0/0";
  w.topic = "t";
  w.span_len = tokens.size();
  w.tokens = std::move(tokens);
  return w;
}

}  // namespace

TEST_SUITE("attribution") {
  TEST_CASE("category bands") {
    const AnalysisConfig cfg;
    const std::pair<std::uint64_t, Category> cases[] = {
        {0, Category::kSth}, {1, Category::kMem},  {4, Category::kMem},  {5, Category::kSeg},
        {49, Category::kSeg}, {50, Category::kFet}, {51, Category::kFet}, {1000000, Category::kFet}};
    for (const auto& [c, expected] : cases) CHECK(categorize(c, cfg) == expected);
    AnalysisConfig custom;
    custom.mem_upper = 2;
    custom.seg_upper = 3;
    CHECK(categorize(2, custom) == Category::kSeg);
    CHECK(categorize(3, custom) == Category::kFet);
    for (Category c : kAllCategories) CHECK(parse_category(category_name(c)) == c);
    CHECK(!parse_category("XYZ").has_value());
  }

  TEST_CASE("categories partition the counts") {
    const AnalysisConfig cfg;
    std::mt19937_64 rng(1);
    for (int i = 0; i < 1000; ++i) {
      const std::uint64_t c = rng() % 200;
      const Category cat = categorize(c, cfg);
      CHECK((c == 0) == (cat == Category::kSth));
      CHECK((c > 0 && c < 5) == (cat == Category::kMem));
      CHECK((c >= 5 && c < 50) == (cat == Category::kSeg));
      CHECK((c >= 50) == (cat == Category::kFet));
    }
  }

  TEST_CASE("standalone perplexity") {
    const Toks w{1, 1, 1, 1, 1, 1};
    const DeterministicProvider certain(4, 1);
    CHECK(standalone_log2_perplexity(certain, w) == 0.0);
    CHECK(standalone_perplexity(certain, w) == 1.0);

    const FixedProbProvider halves({0.5}, 4);
    CHECK(standalone_perplexity(halves, w) == doctest::Approx(2.0).epsilon(1e-12));

    const FixedProbProvider mixed({0.5, 0.25}, 4);
    const Toks two{1, 2};
    CHECK(std::abs(standalone_log2_perplexity(mixed, two) - 1.5) <= 1e-9);
    CHECK(standalone_perplexity(mixed, two) == doctest::Approx(std::pow(2.0, 1.5)));
    CHECK(error_of([&] { standalone_log2_perplexity(mixed, Toks{}); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("planted duplicates are counted exactly") {
    const Toks needle{0, 1, 2, 3, 4, 5};
    const DeterministicProvider scorer(64, 0);
    const AnalysisConfig cfg;
    const std::pair<std::size_t, Category> cases[] = {
        {0, Category::kSth}, {1, Category::kMem}, {7, Category::kSeg}, {60, Category::kFet}};
    for (const auto& [copies, expected] : cases) {
      std::mt19937_64 rng(copies + 100);
      const Corpus corpus = planted_corpus(rng, needle, copies);
      REQUIRE(naive_positions(corpus, needle).size() == copies);
      const auto index = SuffixIndex::from_corpus(corpus);
      const auto a = attribute_window(index, scorer, window_of(needle), cfg);
      CHECK(a.match.count == copies);
      CHECK(a.category == expected);
      CHECK(a.match.sample_occurrences.size() == std::min<std::size_t>(copies, cfg.max_sample_occurrences));
      const auto positions = naive_positions(corpus, needle);
      for (std::size_t i = 0; i < a.match.sample_occurrences.size(); ++i) {
        CHECK(a.match.sample_occurrences[i].global_pos == positions[i]);
      }
    }
  }

  TEST_CASE("novel tokens are synthetic") {
    std::mt19937_64 rng(2);
    const Corpus corpus = planted_corpus(rng, Toks{0, 1, 2, 3, 4, 5}, 1);
    const auto index = SuffixIndex::from_corpus(corpus);
    const auto a = attribute_window(index, DeterministicProvider(64, 7), window_of(Toks{7, 7, 6, 6, 7, 7}),
                                    AnalysisConfig{});
    CHECK(a.match.count == 0);
    CHECK(a.category == Category::kSth);
    CHECK(a.match.sample_occurrences.empty());
  }

  TEST_CASE("attribute_record keeps positional order") {
    std::mt19937_64 rng(3);
    const Corpus corpus = planted_corpus(rng, Toks{0, 1, 2, 3, 4, 5}, 3);
    const auto index = SuffixIndex::from_corpus(corpus);
    const auto lm = train_toy_lm(corpus, ToyLmOptions{});
    auto rec = plexitrace::testing::record_with_probs({.99, .99, .99, .99, .99, .99, .99, .1, .99, .99, .99, .99, .99, .99},
                                                      {0, 1, 2, 3, 4, 5, 6, 9, 9, 9, 9, 9, 9, 9});
    const auto attrs = attribute_record(index, *lm, rec, AnalysisConfig{});
    REQUIRE(attrs.size() == 3);
    CHECK(attrs[0].window.output_position() == 0);
    CHECK(attrs[0].match.count == 3);
    CHECK(attrs[1].window.output_position() == 1);
    CHECK(attrs[2].window.output_position() == 8);
    for (const auto& a : attrs) CHECK(a.category == categorize(a.match.count, AnalysisConfig{}));

    rec = plexitrace::testing::record_with_probs(std::vector<double>(10, 0.2));
    CHECK(attribute_record(index, *lm, rec, AnalysisConfig{}).empty());
  }

  TEST_CASE("attribution JSON-lines") {
    WindowAttribution a;
    a.window = window_of(Toks{1, 2, 3, 4, 5, 6});
    a.window.span_start = 4;
    a.window.span_len = 8;
    a.window.offset = 2;
    a.window.is_prompt_repetition = true;
    a.match.count = 7;
    a.match.sample_occurrences = {Occurrence{3, 10, 0}};
    a.category = Category::kSeg;
    a.log2_standalone_ppl = 0.625;
    const std::string line = attribution_to_jsonl(a);
    CHECK(line.rfind(R"({"record_id":"r/0/0","topic":"t","tokens":[1,2,3,4,5,6],"c":7,"category":"SEG",)", 0) == 0);
    const auto back = attribution_from_jsonl(line);
    CHECK(back.window.tokens == a.window.tokens);
    CHECK(back.window.span_start == 4);
    CHECK(back.window.offset == 2);
    CHECK(back.window.is_prompt_repetition);
    CHECK(back.match.count == 7);
    CHECK(back.category == Category::kSeg);
    CHECK(back.log2_standalone_ppl == 0.625);
    REQUIRE(back.match.sample_occurrences.size() == 1);
    CHECK(back.match.sample_occurrences[0].doc_id == 3);
    CHECK(attribution_to_jsonl(back) == line);
    CHECK(error_of([] { attribution_from_jsonl(R"({"record_id":"x"})"); }) == ErrorCode::kInvalidArgument);
  }
}
