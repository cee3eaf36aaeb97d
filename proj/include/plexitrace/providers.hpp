#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <unordered_map>
#include <vector>

#include "plexitrace/lm_provider.hpp"

namespace plexitrace {

// Serves recorded generations. next_distribution follows a recorded
// prompt+output path: the recorded token gets its raw_prob and the remaining
// mass is spread evenly over the rest of the vocabulary.
class ReplayProvider final : public LanguageModel {
 public:
  ReplayProvider(std::vector<GenerationRecord> records, std::uint32_t vocab_size, std::string id = "replay");

  /// Reads GenerationRecord JSON-lines. Errors: Io, InvalidArgument.
  static std::unique_ptr<ReplayProvider> from_jsonl(const std::filesystem::path& path, std::uint32_t vocab_size);

  std::string id() const override { return id_; }
  std::uint32_t vocab_size() const override { return vocab_size_; }
  NextTokenDistribution next_distribution(std::span<const TokenId> context) const override;
  std::optional<GenerationRecord> recorded(std::string_view record_id) const override;

  std::size_t size() const { return records_.size(); }

 private:
  std::vector<GenerationRecord> records_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::uint32_t vocab_size_;
  std::string id_;
};

struct HttpProviderConfig {
  std::string base_url = "http://127.0.0.1:8000";  // scheme://host[:port]
  std::string path = "/v1/completions";
  std::string model;
  std::string api_key;  // sent as a bearer token when non-empty
  std::uint32_t vocab_size = 0;
  std::uint32_t top_logprobs = 20;
  std::optional<TokenId> bos_token;
  std::optional<TokenId> eos_token;
  std::size_t max_context = 2048;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
  std::chrono::seconds timeout{60};
  int max_in_flight = 4;

  /// Fills api_key from PLEXITRACE_API_KEY when it is empty.
  void load_api_key_from_env();
};

// Completions-style JSON endpoint with per-token log-probabilities. Token ids
// go out as integer prompts; returned tokens must be ids, either plain
// integers or "token_id:<n>" strings. Transient failures (connection errors,
// 429, 5xx) are retried with exponential backoff.
class HttpProvider final : public LanguageModel {
 public:
  explicit HttpProvider(HttpProviderConfig config);
  ~HttpProvider() override;

  std::string id() const override;
  std::uint32_t vocab_size() const override { return config_.vocab_size; }
  NextTokenDistribution next_distribution(std::span<const TokenId> context) const override;
  std::vector<double> score(std::span<const TokenId> tokens, std::span<const TokenId> context) const override;
  std::optional<TokenId> eos_token() const override { return config_.eos_token; }

 private:
  std::string post(const std::string& body) const;

  HttpProviderConfig config_;
  mutable std::counting_semaphore<1024> in_flight_;
};

/// Parses "token_id:<n>" or "<n>"; nullopt otherwise.
std::optional<TokenId> parse_token_key(std::string_view key);

}  // namespace plexitrace
