#include <cmath>
#include <random>

#include "doctest.h"
#include "plexitrace/spans.hpp"
#include "test_support.hpp"

using namespace plexitrace;
using plexitrace::testing::error_of;
using plexitrace::testing::naive_contains;
using plexitrace::testing::record_with_probs;

using Toks = std::vector<TokenId>;

namespace {

LowPerplexitySpan span_of_length(std::size_t n) {
  LowPerplexitySpan s;
  s.record_id = "r";
  s.start = 3;
  for (std::size_t i = 0; i < n; ++i) s.tokens.push_back(ScoredToken{static_cast<TokenId>(i), 0.95, 0.95});
  return s;
}

}  // namespace

TEST_SUITE("spans") {
  TEST_CASE("single qualifying run of six") {
    const auto rec = record_with_probs({.95, .95, .95, .95, .95, .95, .5, .95, .2});
    const auto spans = extract_spans(rec, AnalysisConfig{});
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].start == 0);
    CHECK(spans[0].length() == 6);
  }

  TEST_CASE("no qualifying run") {
    CHECK(extract_spans(record_with_probs(std::vector<double>(20, 0.5)), AnalysisConfig{}).empty());
    CHECK(extract_spans(record_with_probs({}), AnalysisConfig{}).empty());
  }

  TEST_CASE("nine-token span between low-probability tokens") {
    const auto rec = record_with_probs({.3, .91, .99, .95, .92, .93, .94, .97, .99, .96, .1});
    const auto spans = extract_spans(rec, AnalysisConfig{});
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].start == 1);
    CHECK(spans[0].length() == 9);
    CHECK(windows(spans[0], AnalysisConfig{}).size() == 4);
  }

  TEST_CASE("threshold is inclusive and runs shorter than the minimum are dropped") {
    const auto rec = record_with_probs({.9, .9, .9, .9, .9, .9, .1, .95, .95, .95, .95, .95});
    const auto spans = extract_spans(rec, AnalysisConfig{});
    REQUIRE(spans.size() == 1);
    CHECK(spans[0].length() == 6);
  }

  TEST_CASE("window counts") {
    const AnalysisConfig cfg;
    CHECK(windows(span_of_length(9), cfg).size() == 4);
    CHECK(windows(span_of_length(6), cfg).size() == 1);
    CHECK(windows(span_of_length(14), cfg).size() == 9);
    CHECK(error_of([&] { windows(span_of_length(5), cfg); }) == ErrorCode::kSpanTooShort);
    std::mt19937_64 rng(4);
    for (int i = 0; i < 200; ++i) {
      const std::size_t len = 6 + rng() % 59;
      const auto ws = windows(span_of_length(len), cfg);
      REQUIRE(ws.size() == len - 6 + 1);
      // stride-1 windows reassemble the span
      Toks joined = ws.front().tokens;
      for (std::size_t k = 1; k < ws.size(); ++k) joined.push_back(ws[k].tokens.back());
      CHECK(joined.size() == len);
      for (std::size_t k = 0; k < ws.size(); ++k) {
        CHECK(ws[k].offset == k);
        CHECK(ws[k].output_position() == 3 + k);
        CHECK(ws[k].tokens.size() == 6);
      }
    }
  }

  TEST_CASE("extracted spans are maximal and disjoint") {
    std::mt19937_64 rng(12);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const AnalysisConfig cfg;
    for (int i = 0; i < 300; ++i) {
      std::vector<double> probs(rng() % 80);
      for (auto& p : probs) p = u(rng) < 0.8 ? 0.95 : 0.3;
      const auto rec = record_with_probs(probs);
      const auto spans = extract_spans(rec, cfg);
      std::vector<bool> covered(probs.size(), false);
      for (const auto& s : spans) {
        CHECK(s.length() >= cfg.min_span_len);
        for (std::size_t k = 0; k < s.length(); ++k) {
          CHECK(probs[s.start + k] >= cfg.prob_threshold);
          CHECK(!covered[s.start + k]);
          covered[s.start + k] = true;
        }
        if (s.start > 0) CHECK(probs[s.start - 1] < cfg.prob_threshold);
        if (s.start + s.length() < probs.size()) CHECK(probs[s.start + s.length()] < cfg.prob_threshold);
      }
      // every long-enough high run is reported
      std::size_t run = 0;
      for (std::size_t k = 0; k <= probs.size(); ++k) {
        if (k < probs.size() && probs[k] >= cfg.prob_threshold) {
          ++run;
          continue;
        }
        if (run >= cfg.min_span_len) CHECK(covered[k - 1]);
        run = 0;
      }
    }
  }

  TEST_CASE("prompt repetition") {
    const Toks prompt{9, 8, 7, 1, 2, 3, 4, 5, 6, 7, 8};
    CHECK(is_prompt_repetition(Toks{1, 2, 3, 4, 5, 6}, prompt));
    CHECK(!is_prompt_repetition(Toks{1, 2, 3, 4, 5, 9}, prompt));
    CHECK(!is_prompt_repetition(Toks{1, 2, 3}, Toks{}));
    std::mt19937_64 rng(6);
    for (int i = 0; i < 500; ++i) {
      Toks p(rng() % 30), w(1 + rng() % 4);
      for (auto& t : p) t = static_cast<TokenId>(rng() % 3);
      for (auto& t : w) t = static_cast<TokenId>(rng() % 3);
      CHECK(is_prompt_repetition(w, p) == naive_contains(p, w));
    }
  }

  TEST_CASE("record windows carry repetition flags") {
    GenerationRecord rec = record_with_probs(std::vector<double>(8, 0.99), {1, 2, 3, 4, 5, 6, 7, 8}, {0, 1, 2, 3, 4, 5, 6});
    const auto ws = record_windows(rec, AnalysisConfig{});
    REQUIRE(ws.size() == 3);
    CHECK(ws[0].is_prompt_repetition);
    CHECK(!ws[1].is_prompt_repetition);
    CHECK(ws[0].span_len == 8);
    const std::string line = window_to_jsonl(ws[0]);
    CHECK(line.find("\"is_prompt_repetition\":true") != std::string::npos);
  }

  TEST_CASE("degeneration on constructed loops") {
    Toks out{10, 11, 12, 13};
    for (int i = 0; i < 5; ++i) out.insert(out.end(), {1, 2, 3});
    const auto d = detect_degeneration(out);
    REQUIRE(d.has_value());
    CHECK(d->period == 3);
    CHECK(d->repeats == 5);
    CHECK(d->start == 4);

    const auto unit = detect_degeneration(Toks(10, 7));
    REQUIRE(unit.has_value());
    CHECK(*unit == Degeneration{1, 0, 10});

    Toks inc(100);
    for (std::size_t i = 0; i < inc.size(); ++i) inc[i] = static_cast<TokenId>(i);
    CHECK(!detect_degeneration(inc).has_value());
    CHECK(!detect_degeneration(Toks{}).has_value());
  }

  TEST_CASE("reported loops really repeat") {
    std::mt19937_64 rng(21);
    for (int i = 0; i < 300; ++i) {
      Toks t(rng() % 60);
      for (auto& x : t) x = static_cast<TokenId>(rng() % 3);
      const auto d = detect_degeneration(t);
      if (!d) continue;
      REQUIRE(d->start + d->period * d->repeats <= t.size());
      CHECK(d->repeats >= 3);
      for (std::size_t k = d->start + d->period; k < d->start + d->period * d->repeats; ++k) {
        CHECK(t[k] == t[k - d->period]);
      }
    }
  }

  TEST_CASE("span length statistics") {
    const std::vector<std::size_t> same{6, 6, 6};
    const auto a = length_stats(same);
    CHECK(a.mean == 6.0);
    CHECK(a.stddev == 0.0);
    const std::vector<std::size_t> two{6, 14};
    const auto b = length_stats(two);
    CHECK(b.mean == 10.0);
    CHECK(b.stddev == 4.0);
    CHECK(length_stats(std::vector<std::size_t>{}).count == 0);
    const auto by_topic = span_length_stats({{"x", {6, 14}}, {"y", {7}}});
    CHECK(by_topic.at("x").mean == 10.0);
    CHECK(by_topic.at("y").count == 1);
  }

  TEST_CASE("config validation") {
    AnalysisConfig cfg;
    cfg.min_span_len = 5;
    CHECK(error_of([&] { cfg.validate(); }) == ErrorCode::kInvalidArgument);
    cfg = {};
    cfg.mem_upper = 60;
    CHECK(error_of([&] { cfg.validate(); }) == ErrorCode::kInvalidArgument);
    cfg = {};
    cfg.prob_threshold = 1.5;
    CHECK(error_of([&] { cfg.validate(); }) == ErrorCode::kInvalidArgument);
  }
}
