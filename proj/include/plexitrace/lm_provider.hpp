#pragma once

#include <cstdint>
#include <memory>
#include <nlohmann/json_fwd.hpp>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "plexitrace/sampling.hpp"
#include "plexitrace/types.hpp"

namespace plexitrace {

struct ScoredToken {
  TokenId token = 0;
  double prob = 0.0;      // under the truncated sampling distribution
  double raw_prob = 0.0;  // under the temperature softmax, before truncation

  bool operator==(const ScoredToken&) const = default;
};

struct GenerationRecord {
  std::string record_id;
  std::string topic;
  std::vector<TokenId> prompt;
  std::vector<ScoredToken> output;
  SamplingParams params;
  std::string provider_id;

  bool operator==(const GenerationRecord&) const = default;
};

// Floor applied to zero probabilities returned by score(), so that unseen
// tokens under an unsmoothed model yield a large but finite surprisal.
inline constexpr double kMinScoreProb = 0x1.0p-40;

// Logit used for tokens a count-based model assigns probability zero; exp of
// it underflows to exactly 0 for any temperature <= 10.
inline constexpr double kLogZero = -1e4;

// Next-token distributions and teacher-forced scoring. Implementations must
// tolerate concurrent calls.
class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual std::string id() const = 0;
  virtual std::uint32_t vocab_size() const = 0;

  /// Finite logits of length vocab_size(). An empty context means the
  /// begin-of-text state. Errors: ProviderUnavailable, ContextTooLong.
  virtual NextTokenDistribution next_distribution(std::span<const TokenId> context) const = 0;

  /// Temperature-free probability of each of `tokens` given `context` and
  /// the preceding tokens. The default asks next_distribution per position.
  virtual std::vector<double> score(std::span<const TokenId> tokens, std::span<const TokenId> context) const;

  /// Token that ends generation; never appended to the output.
  virtual std::optional<TokenId> eos_token() const { return std::nullopt; }

  /// Previously recorded generation for `record_id`, if this provider replays.
  virtual std::optional<GenerationRecord> recorded(std::string_view record_id) const {
    (void)record_id;
    return std::nullopt;
  }
};

/// Autoregressive sampling with a PRNG seeded from params.seed. Records both
/// the sampling-distribution and pre-truncation probability of each token.
/// Errors: InvalidArgument (empty prompt or bad params), ProviderUnavailable.
GenerationRecord generate(const LanguageModel& model, std::span<const TokenId> prompt, const SamplingParams& params,
                          std::string record_id = {}, std::string topic = {});

void to_json(nlohmann::json& j, const SamplingParams& p);
void from_json(const nlohmann::json& j, SamplingParams& p);
void to_json(nlohmann::json& j, const ScoredToken& t);
void from_json(const nlohmann::json& j, ScoredToken& t);
void to_json(nlohmann::json& j, const GenerationRecord& r);
void from_json(const nlohmann::json& j, GenerationRecord& r);

/// One JSON object per line, fixed key order.
std::string record_to_jsonl(const GenerationRecord& r);
GenerationRecord record_from_jsonl(std::string_view line);

}  // namespace plexitrace
