#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "doctest.h"
#include "plexitrace/lm_provider.hpp"
#include "plexitrace/providers.hpp"
#include "plexitrace/toy_lm.hpp"
#include "test_support.hpp"

using namespace plexitrace;
using plexitrace::testing::DeterministicProvider;
using plexitrace::testing::error_of;
using plexitrace::testing::make_corpus;
using plexitrace::testing::TempDir;

using Toks = std::vector<TokenId>;

namespace {

std::size_t argmax(const std::vector<double>& v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

TEST_SUITE("lm_provider") {
  TEST_CASE("toy LM follows the alternating pattern") {
    const auto lm = train_toy_lm(make_corpus({{0, 1, 0, 1, 0, 1, 0, 1}}, 4), ToyLmOptions{2, 1.0, std::nullopt});
    CHECK(argmax(lm->probabilities(Toks{0})) == 1);
    CHECK(argmax(lm->probabilities(Toks{1})) == 0);
    const auto d = lm->next_distribution(Toks{0});
    CHECK(argmax(d.logits) == 1);
  }

  TEST_CASE("empty context gives the smoothed unigram distribution") {
    const Toks doc{0, 1, 1, 2, 2, 2};
    const auto lm = train_toy_lm(make_corpus({doc}, 5), ToyLmOptions{3, 0.5, std::nullopt});
    const auto p = lm->probabilities(Toks{});
    CHECK(lm->history_length(Toks{}) == 0);
    // (count + lambda) / (6 + 0.5 * 5)
    const double denom = 6 + 0.5 * 5;
    CHECK(p[0] == doctest::Approx(1.5 / denom));
    CHECK(p[1] == doctest::Approx(2.5 / denom));
    CHECK(p[2] == doctest::Approx(3.5 / denom));
    CHECK(p[3] == doctest::Approx(0.5 / denom));
  }

  TEST_CASE("unigram frequencies without smoothing") {
    const auto lm = train_toy_lm(make_corpus({{0, 0, 0, 1}}, 2), ToyLmOptions{1, 0.0, std::nullopt});
    const auto p = lm->probabilities(Toks{1, 0});
    CHECK(p[0] == doctest::Approx(0.75));
    CHECK(p[1] == doctest::Approx(0.25));
  }

  TEST_CASE("Laplace smoothing of an unseen continuation") {
    // history [0] is followed by 1 twice; vocab 4
    const auto lm = train_toy_lm(make_corpus({{0, 1, 2, 0, 1, 3}}, 4), ToyLmOptions{2, 1.0, std::nullopt});
    CHECK(lm->history_length(Toks{0}) == 1);
    const auto s = lm->score(Toks{2}, Toks{0});
    CHECK(s[0] == doctest::Approx(1.0 / (2 + 4)));
    CHECK(lm->probabilities(Toks{0})[1] == doctest::Approx(3.0 / 6));
  }

  TEST_CASE("large smoothing tends to uniform") {
    const auto lm = train_toy_lm(make_corpus({{0, 0, 0, 0, 1}}, 3), ToyLmOptions{2, 1e9, std::nullopt});
    for (double p : lm->probabilities(Toks{0})) CHECK(p == doctest::Approx(1.0 / 3).epsilon(1e-6));
  }

  TEST_CASE("backoff uses the longest seen history") {
    const auto lm = train_toy_lm(make_corpus({{0, 1, 2, 3}}, 5), ToyLmOptions{3, 0.0, std::nullopt});
    CHECK(lm->history_length(Toks{0, 1}) == 2);
    CHECK(lm->history_length(Toks{4, 1}) == 1);
    CHECK(lm->history_length(Toks{4, 4}) == 0);
    CHECK(lm->probabilities(Toks{4, 1})[2] == doctest::Approx(1.0));
  }

  TEST_CASE("probabilities sum to one on random contexts") {
    std::mt19937_64 rng(3);
    const auto corpus = plexitrace::testing::random_corpus(rng, 3000, 12, 100);
    for (std::uint32_t order : {1u, 2u, 4u}) {
      for (double lambda : {0.0, 0.1, 1.0}) {
        const auto lm = train_toy_lm(corpus, ToyLmOptions{order, lambda, TokenId{11}});
        for (int i = 0; i < 50; ++i) {
          Toks ctx(rng() % 6);
          for (auto& t : ctx) t = static_cast<TokenId>(rng() % 12);
          const auto p = lm->probabilities(ctx);
          CHECK(std::accumulate(p.begin(), p.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
        }
      }
    }
  }

  TEST_CASE("toy LM training errors") {
    Corpus empty;
    empty.vocabulary = Vocabulary{4, "", std::nullopt};
    CHECK(error_of([&] { train_toy_lm(empty, {}); }) == ErrorCode::kEmptyCorpus);
    const Corpus c = make_corpus({{0, 1}}, 4);
    CHECK(error_of([&] { train_toy_lm(c, ToyLmOptions{0, 1.0, std::nullopt}); }) == ErrorCode::kInvalidArgument);
    CHECK(error_of([&] { train_toy_lm(c, ToyLmOptions{2, -1.0, std::nullopt}); }) == ErrorCode::kInvalidArgument);
    CHECK(error_of([&] { train_toy_lm(c, ToyLmOptions{2, 1.0, TokenId{4}}); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("greedy decoding reproduces the single training document") {
    std::mt19937_64 rng(8);
    Toks doc(80);
    for (auto& t : doc) t = static_cast<TokenId>(rng() % 50);
    const auto lm = train_toy_lm(make_corpus({doc}, 50), ToyLmOptions{6, 0.0, std::nullopt});
    const Toks prefix(doc.begin(), doc.begin() + 5);
    const auto rec = generate(*lm, prefix, SamplingParams{0.1, 1, 1.0, 0, 75});
    Toks out;
    for (const auto& t : rec.output) out.push_back(t.token);
    CHECK(out == Toks(doc.begin() + 5, doc.end()));
  }

  TEST_CASE("end-of-document token stops generation") {
    const Toks doc{0, 1, 2, 3};
    const auto lm = train_toy_lm(make_corpus({doc}, 5), ToyLmOptions{3, 0.0, TokenId{4}});
    const auto rec = generate(*lm, Toks{0, 1}, SamplingParams{0.1, 1, 1.0, 0, 50});
    REQUIRE(rec.output.size() == 2);
    CHECK(rec.output[0].token == 2);
    CHECK(rec.output[1].token == 3);
  }

  TEST_CASE("generate: degenerate distribution, determinism, boundaries") {
    const DeterministicProvider model(8, 3);
    for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
      const auto rec = generate(model, Toks{1}, SamplingParams{0.7, 20, 0.8, seed, 10});
      REQUIRE(rec.output.size() == 10);
      for (const auto& t : rec.output) {
        CHECK(t.token == 3);
        CHECK(t.prob == 1.0);
        CHECK(t.raw_prob == 1.0);
      }
    }
    CHECK(generate(model, Toks{1}, SamplingParams{0.7, 20, 0.8, 0, 0}).output.empty());
    CHECK(error_of([&] { generate(model, Toks{}, SamplingParams{}); }) == ErrorCode::kInvalidArgument);

    std::mt19937_64 rng(1);
    const auto lm = train_toy_lm(plexitrace::testing::random_corpus(rng, 2000, 20, 100), ToyLmOptions{});
    const SamplingParams params{1.0, 10, 0.9, 1234, 40};
    const auto a = generate(*lm, Toks{1, 2, 3}, params, "x", "t");
    const auto b = generate(*lm, Toks{1, 2, 3}, params, "x", "t");
    CHECK(a == b);
    CHECK(a.provider_id == lm->id());
    for (const auto& t : a.output) {
      CHECK(t.prob > 0.0);
      CHECK(t.prob <= 1.0);
      CHECK(t.raw_prob <= t.prob + 1e-12);
    }
  }

  TEST_CASE("default score of a deterministic provider") {
    const DeterministicProvider model(4, 2);
    const auto s = model.score(Toks{2, 2, 2}, Toks{});
    CHECK(s == std::vector<double>{1.0, 1.0, 1.0});
    // zero-probability tokens are floored, not zero
    CHECK(model.score(Toks{1}, Toks{})[0] == kMinScoreProb);
  }

  TEST_CASE("record JSON-lines round trip") {
    GenerationRecord r;
    r.record_id = "topic \"q\"/3/1";
    r.topic = "topic \"q\"";
    r.prompt = {1, 2, 3};
    r.output = {{4, 0.5, 0.25}, {5, 1.0, 0.9}};
    r.params = SamplingParams{0.3, 5, 0.9, 77, 12};
    r.provider_id = "toy";
    const std::string line = record_to_jsonl(r);
    CHECK(line.find('\n') == std::string::npos);
    CHECK(line.rfind("{\"record_id\":", 0) == 0);
    CHECK(record_from_jsonl(line) == r);
    CHECK(error_of([] { record_from_jsonl("{not json"); }) == ErrorCode::kInvalidArgument);
  }

  TEST_CASE("replay provider follows its recorded path") {
    GenerationRecord r;
    r.record_id = "a/0/0";
    r.prompt = {1, 2};
    r.output = {{3, 0.9, 0.8}, {4, 1.0, 0.95}};
    r.provider_id = "orig";
    const ReplayProvider replay({r}, 6);
    CHECK(replay.recorded("a/0/0") == r);
    CHECK(!replay.recorded("nope").has_value());

    const auto p = softmax(replay.next_distribution(Toks{1, 2}).logits, 1.0);
    CHECK(p[3] == doctest::Approx(0.8));
    CHECK(p[0] == doctest::Approx(0.04));
    const auto out = generate(replay, Toks{1, 2}, SamplingParams{1.0, 1, 1.0, 0, 2});
    REQUIRE(out.output.size() == 2);
    CHECK(out.output[1].token == 4);
    CHECK(error_of([&] { replay.next_distribution(Toks{1, 2, 3, 4}); }) == ErrorCode::kProviderUnavailable);
    CHECK(error_of([&] { replay.next_distribution(Toks{9}); }) == ErrorCode::kProviderUnavailable);

    TempDir dir;
    std::ofstream(dir / "r.jsonl") << record_to_jsonl(r) << "\n\n";
    const auto loaded = ReplayProvider::from_jsonl(dir / "r.jsonl", 6);
    CHECK(loaded->size() == 1);
    CHECK(loaded->id() == "replay:orig");
    CHECK(error_of([&] { ReplayProvider::from_jsonl(dir / "missing.jsonl", 6); }) == ErrorCode::kIo);
  }
}
