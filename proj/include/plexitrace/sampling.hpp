#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "plexitrace/types.hpp"

namespace plexitrace {

struct SamplingParams {
  double temperature = 0.7;
  std::uint32_t top_k = 20;
  double top_p = 0.8;
  std::uint64_t seed = 0;
  std::uint32_t max_new_tokens = 256;

  /// Throws InvalidArgument unless T > 0, k >= 1 and 0 < top_p <= 1.
  void validate() const;
  bool operator==(const SamplingParams&) const = default;
};

// Unnormalized log-scores over the whole vocabulary.
struct NextTokenDistribution {
  std::vector<double> logits;
};

struct TokenProb {
  TokenId token = 0;
  double prob = 0.0;
};

/// exp(z_i / T) / sum_j exp(z_j / T), computed after subtracting the max.
/// Errors: NonFiniteLogit, InvalidArgument (T <= 0 or empty input).
std::vector<double> softmax(std::span<const double> logits, double temperature);

/// Top-k then top-p truncation of an already normalized distribution, then
/// renormalization. Survivors are ordered by descending probability, ties by
/// ascending token id. Top-p keeps the shortest prefix whose cumulative
/// (top-k renormalized) mass reaches top_p.
std::vector<TokenProb> truncate_distribution(std::span<const double> probs, std::uint32_t top_k, double top_p);

/// Temperature, then top-k, then top-p, then renormalize.
std::vector<TokenProb> apply_sampling(const NextTokenDistribution& dist, const SamplingParams& params);

/// Draws one entry of a truncated distribution with a single uniform variate.
TokenId sample_from(std::span<const TokenProb> dist, Rng& rng);

/// 1 / prob. Errors: ProbOutOfRange unless 0 < prob <= 1.
double token_perplexity(double prob);

/// -log2(prob), the token's surprisal in bits. Same domain as token_perplexity.
double log2_token_perplexity(double prob);

}  // namespace plexitrace
