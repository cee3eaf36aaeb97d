#include "plexitrace/providers.hpp"

#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <nlohmann/json.hpp>
#include <thread>

#include "plexitrace/error.hpp"

#ifdef PLEXITRACE_HTTPS
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

namespace plexitrace {

ReplayProvider::ReplayProvider(std::vector<GenerationRecord> records, std::uint32_t vocab_size, std::string id)
    : records_(std::move(records)), vocab_size_(vocab_size), id_(std::move(id)) {
  if (vocab_size_ < 2) throw Error(ErrorCode::kInvalidArgument, "replay provider needs vocab_size >= 2");
  for (std::size_t i = 0; i < records_.size(); ++i) by_id_.emplace(records_[i].record_id, i);
}

std::unique_ptr<ReplayProvider> ReplayProvider::from_jsonl(const std::filesystem::path& path,
                                                           std::uint32_t vocab_size) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<GenerationRecord> records;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    records.push_back(record_from_jsonl(line));
  }
  std::string id = "replay";
  if (!records.empty() && !records.front().provider_id.empty()) id = "replay:" + records.front().provider_id;
  return std::make_unique<ReplayProvider>(std::move(records), vocab_size, std::move(id));
}

NextTokenDistribution ReplayProvider::next_distribution(std::span<const TokenId> context) const {
  for (const auto& rec : records_) {
    const std::size_t plen = rec.prompt.size();
    if (context.size() < plen || context.size() >= plen + rec.output.size()) continue;
    if (!std::equal(rec.prompt.begin(), rec.prompt.end(), context.begin())) continue;
    bool match = true;
    for (std::size_t i = plen; i < context.size() && match; ++i) match = rec.output[i - plen].token == context[i];
    if (!match) continue;

    const ScoredToken& next = rec.output[context.size() - plen];
    if (next.token >= vocab_size_) throw Error(ErrorCode::kTokenOutOfRange, "recorded token outside vocabulary");
    const double rest = (1.0 - next.raw_prob) / (vocab_size_ - 1);
    NextTokenDistribution d;
    d.logits.assign(vocab_size_, rest > 0 ? std::log(rest) : kLogZero);
    d.logits[next.token] = next.raw_prob > 0 ? std::log(next.raw_prob) : kLogZero;
    return d;
  }
  throw Error(ErrorCode::kProviderUnavailable, "no recorded continuation for a context of " +
                                                   std::to_string(context.size()) + " tokens");
}

std::optional<GenerationRecord> ReplayProvider::recorded(std::string_view record_id) const {
  const auto it = by_id_.find(std::string(record_id));
  if (it == by_id_.end()) return std::nullopt;
  return records_[it->second];
}

void HttpProviderConfig::load_api_key_from_env() {
  if (!api_key.empty()) return;
  if (const char* key = std::getenv("PLEXITRACE_API_KEY")) api_key = key;
}

std::optional<TokenId> parse_token_key(std::string_view key) {
  constexpr std::string_view kPrefix = "token_id:";
  if (key.starts_with(kPrefix)) key.remove_prefix(kPrefix.size());
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(key.data(), key.data() + key.size(), v);
  if (ec != std::errc{} || ptr != key.data() + key.size() || v >= kSentinel) return std::nullopt;
  return static_cast<TokenId>(v);
}

HttpProvider::HttpProvider(HttpProviderConfig config)
    : config_(std::move(config)), in_flight_(std::max(1, std::min(config_.max_in_flight, 1024))) {
  if (config_.vocab_size < 2) throw Error(ErrorCode::kConfig, "http provider needs vocab_size >= 2");
  if (config_.max_attempts < 1) throw Error(ErrorCode::kConfig, "http provider needs max_attempts >= 1");
}

HttpProvider::~HttpProvider() = default;

std::string HttpProvider::id() const { return "http:" + config_.model + "@" + config_.base_url; }

std::string HttpProvider::post(const std::string& body) const {
  struct Permit {
    std::counting_semaphore<1024>& s;
    explicit Permit(std::counting_semaphore<1024>& sem) : s(sem) { s.acquire(); }
    ~Permit() { s.release(); }
  } permit(in_flight_);

  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  std::string last_error;
  auto backoff = config_.initial_backoff;
  for (int attempt = 0; attempt < config_.max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    httplib::Client client(config_.base_url);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    const auto res = client.Post(config_.path, headers, body, "application/json");
    if (!res) {
      last_error = "request failed: " + httplib::to_string(res.error());
      continue;
    }
    if (res->status == 200) return res->body;
    last_error = "HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
    if (res->status != 429 && res->status < 500) break;
  }
  throw Error(ErrorCode::kProviderUnavailable, config_.base_url + config_.path + ": " + last_error);
}

namespace {

nlohmann::json parse_logprobs(const std::string& body) {
  try {
    auto j = nlohmann::json::parse(body);
    return j.at("choices").at(0).at("logprobs");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProviderUnavailable, std::string("malformed completions response: ") + e.what());
  }
}

}  // namespace

NextTokenDistribution HttpProvider::next_distribution(std::span<const TokenId> context) const {
  if (context.size() > config_.max_context) {
    throw Error(ErrorCode::kContextTooLong, std::to_string(context.size()) + " tokens exceed " +
                                                std::to_string(config_.max_context));
  }
  std::vector<TokenId> prompt;
  if (context.empty() && config_.bos_token) prompt.push_back(*config_.bos_token);
  prompt.insert(prompt.end(), context.begin(), context.end());

  const nlohmann::json request{{"model", config_.model},      {"prompt", prompt},
                               {"max_tokens", 1},             {"temperature", 1.0},
                               {"top_p", 1.0},                {"logprobs", config_.top_logprobs},
                               {"echo", false},               {"return_tokens_as_token_ids", true}};
  const auto logprobs = parse_logprobs(post(request.dump()));

  NextTokenDistribution d;
  d.logits.assign(config_.vocab_size, kLogZero);
  double seen_mass = 0.0;
  std::size_t seen = 0;
  try {
    for (const auto& [key, value] : logprobs.at("top_logprobs").at(0).items()) {
      const auto tok = parse_token_key(key);
      if (!tok || *tok >= config_.vocab_size) {
        throw Error(ErrorCode::kProviderUnavailable, "server returned a non-id token key '" + key + "'");
      }
      const double lp = value.get<double>();
      if (d.logits[*tok] == kLogZero) {
        seen_mass += std::exp(lp);
        ++seen;
      }
      d.logits[*tok] = lp;
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProviderUnavailable, std::string("malformed top_logprobs: ") + e.what());
  }
  const double rest = 1.0 - seen_mass;
  if (rest > 0 && seen < config_.vocab_size) {
    const double fill = std::log(rest / static_cast<double>(config_.vocab_size - seen));
    for (double& z : d.logits) {
      if (z == kLogZero) z = fill;
    }
  }
  return d;
}

std::vector<double> HttpProvider::score(std::span<const TokenId> tokens, std::span<const TokenId> context) const {
  if (tokens.empty()) return {};
  if (context.size() + tokens.size() > config_.max_context) {
    throw Error(ErrorCode::kContextTooLong, "scoring request exceeds " + std::to_string(config_.max_context));
  }
  std::vector<TokenId> prompt;
  if (context.empty() && config_.bos_token) prompt.push_back(*config_.bos_token);
  prompt.insert(prompt.end(), context.begin(), context.end());
  const std::size_t first = prompt.size();
  prompt.insert(prompt.end(), tokens.begin(), tokens.end());

  const nlohmann::json request{{"model", config_.model},  {"prompt", prompt},
                               {"max_tokens", 1},         {"temperature", 1.0},
                               {"logprobs", 0},           {"echo", true},
                               {"return_tokens_as_token_ids", true}};
  const auto logprobs = parse_logprobs(post(request.dump()));

  std::vector<double> out;
  out.reserve(tokens.size());
  try {
    const auto& lps = logprobs.at("token_logprobs");
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      const auto& v = lps.at(first + i);
      if (v.is_null()) {
        throw Error(ErrorCode::kProviderUnavailable,
                    "no log-probability for scored token " + std::to_string(i) + " (configure a bos_token)");
      }
      out.push_back(std::clamp(std::exp(v.get<double>()), kMinScoreProb, 1.0));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kProviderUnavailable, std::string("malformed token_logprobs: ") + e.what());
  }
  return out;
}

}  // namespace plexitrace
