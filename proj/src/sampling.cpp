#include "plexitrace/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "plexitrace/error.hpp"

namespace plexitrace {

void SamplingParams::validate() const {
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::kInvalidArgument, "temperature must be positive, got " + std::to_string(temperature));
  }
  if (top_k < 1) throw Error(ErrorCode::kInvalidArgument, "top_k must be >= 1");
  if (!(top_p > 0.0 && top_p <= 1.0)) {
    throw Error(ErrorCode::kInvalidArgument, "top_p must be in (0, 1], got " + std::to_string(top_p));
  }
}

std::vector<double> softmax(std::span<const double> logits, double temperature) {
  if (logits.empty()) throw Error(ErrorCode::kInvalidArgument, "softmax over an empty vocabulary");
  if (!(temperature > 0.0)) throw Error(ErrorCode::kInvalidArgument, "temperature must be positive");
  double max_logit = -INFINITY;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    if (!std::isfinite(logits[i])) {
      throw Error(ErrorCode::kNonFiniteLogit, "logit " + std::to_string(i) + " is not finite");
    }
    max_logit = std::max(max_logit, logits[i]);
  }
  std::vector<double> p(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp((logits[i] - max_logit) / temperature);
    total += p[i];
  }
  for (double& v : p) v /= total;
  return p;
}

std::vector<TokenProb> truncate_distribution(std::span<const double> probs, std::uint32_t top_k, double top_p) {
  std::vector<TokenProb> ranked(probs.size());
  for (std::size_t i = 0; i < probs.size(); ++i) ranked[i] = {static_cast<TokenId>(i), probs[i]};
  const std::size_t k = std::min<std::size_t>(top_k, ranked.size());
  auto by_prob = [](const TokenProb& a, const TokenProb& b) {
    return a.prob != b.prob ? a.prob > b.prob : a.token < b.token;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(), by_prob);
  ranked.resize(k);
  // Underflowed entries can never be drawn; keep them out of the support.
  while (ranked.size() > 1 && ranked.back().prob == 0.0) ranked.pop_back();

  double kept_mass = 0.0;
  for (const auto& tp : ranked) kept_mass += tp.prob;

  std::size_t keep = 0;
  double cumulative = 0.0;
  while (keep < ranked.size()) {
    cumulative += ranked[keep].prob / kept_mass;
    ++keep;
    if (cumulative >= top_p) break;
  }
  ranked.resize(keep);

  double total = 0.0;
  for (const auto& tp : ranked) total += tp.prob;
  for (auto& tp : ranked) tp.prob /= total;
  return ranked;
}

std::vector<TokenProb> apply_sampling(const NextTokenDistribution& dist, const SamplingParams& params) {
  params.validate();
  const auto probs = softmax(dist.logits, params.temperature);
  return truncate_distribution(probs, params.top_k, params.top_p);
}

TokenId sample_from(std::span<const TokenProb> dist, Rng& rng) {
  if (dist.empty()) throw Error(ErrorCode::kInvalidArgument, "cannot sample from an empty distribution");
  const double u = uniform_unit(rng);
  double cumulative = 0.0;
  for (const auto& tp : dist) {
    cumulative += tp.prob;
    if (u < cumulative) return tp.token;
  }
  return dist.back().token;
}

double token_perplexity(double prob) {
  if (!(prob > 0.0 && prob <= 1.0)) {
    throw Error(ErrorCode::kProbOutOfRange, "probability must be in (0, 1], got " + std::to_string(prob));
  }
  return 1.0 / prob;
}

double log2_token_perplexity(double prob) {
  token_perplexity(prob);
  return -std::log2(prob);
}

}  // namespace plexitrace
