#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "plexitrace/corpus.hpp"
#include "plexitrace/lm_provider.hpp"

namespace plexitrace {

struct ToyLmOptions {
  std::uint32_t order = 3;  // n-gram order; histories hold order-1 tokens
  double smoothing = 1.0;   // add-lambda constant
  // When set, the end of every training document counts as an occurrence of
  // this token, and generation stops when it is drawn.
  std::optional<TokenId> eos_token;
};

// Count-based n-gram model. For a context it uses the longest suffix of at
// most order-1 tokens that was seen as a history in training (backing off to
// shorter ones, down to the unigram table) and returns
//   p(t | h) = (count(h, t) + lambda) / (count(h) + lambda * |V|).
class ToyNgramLm final : public LanguageModel {
 public:
  std::string id() const override;
  std::uint32_t vocab_size() const override { return vocab_size_; }
  NextTokenDistribution next_distribution(std::span<const TokenId> context) const override;
  std::vector<double> score(std::span<const TokenId> tokens, std::span<const TokenId> context) const override;
  std::optional<TokenId> eos_token() const override { return options_.eos_token; }

  /// Normalized conditional distribution over the vocabulary.
  std::vector<double> probabilities(std::span<const TokenId> context) const;

  /// Length of the history actually used for `context` after backoff.
  std::size_t history_length(std::span<const TokenId> context) const;

  const ToyLmOptions& options() const { return options_; }

 private:
  friend std::unique_ptr<ToyNgramLm> train_toy_lm(const Corpus&, const ToyLmOptions&);

  struct Continuations {
    std::uint64_t total = 0;
    std::unordered_map<TokenId, std::uint64_t> counts;
  };
  using Table = std::unordered_map<std::string, Continuations>;

  const Continuations* lookup(std::span<const TokenId> context, std::size_t* used) const;

  ToyLmOptions options_;
  std::uint32_t vocab_size_ = 0;
  std::string tokenizer_id_;
  std::vector<Table> tables_;  // tables_[h]: histories of exactly h tokens
};

/// Errors: EmptyCorpus, InvalidArgument (order 0, negative smoothing, eos out of range).
std::unique_ptr<ToyNgramLm> train_toy_lm(const Corpus& corpus, const ToyLmOptions& options);

}  // namespace plexitrace
