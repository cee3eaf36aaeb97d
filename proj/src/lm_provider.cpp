#include "plexitrace/lm_provider.hpp"

#include <algorithm>
#include <nlohmann/json.hpp>

#include "plexitrace/error.hpp"

namespace plexitrace {

std::vector<double> LanguageModel::score(std::span<const TokenId> tokens, std::span<const TokenId> context) const {
  std::vector<TokenId> ctx(context.begin(), context.end());
  std::vector<double> out;
  out.reserve(tokens.size());
  for (TokenId t : tokens) {
    const auto probs = softmax(next_distribution(ctx).logits, 1.0);
    if (t >= probs.size()) throw Error(ErrorCode::kTokenOutOfRange, "scored token " + std::to_string(t));
    out.push_back(std::max(probs[t], kMinScoreProb));
    ctx.push_back(t);
  }
  return out;
}

GenerationRecord generate(const LanguageModel& model, std::span<const TokenId> prompt, const SamplingParams& params,
                          std::string record_id, std::string topic) {
  params.validate();
  if (prompt.empty()) throw Error(ErrorCode::kInvalidArgument, "generation prompt is empty");

  GenerationRecord rec;
  rec.record_id = std::move(record_id);
  rec.topic = std::move(topic);
  rec.prompt.assign(prompt.begin(), prompt.end());
  rec.params = params;
  rec.provider_id = model.id();

  Rng rng(params.seed);
  const auto eos = model.eos_token();
  std::vector<TokenId> context(prompt.begin(), prompt.end());
  for (std::uint32_t step = 0; step < params.max_new_tokens; ++step) {
    const auto dist = model.next_distribution(context);
    const auto raw = softmax(dist.logits, params.temperature);
    const auto truncated = truncate_distribution(raw, params.top_k, params.top_p);
    const TokenId tok = sample_from(truncated, rng);
    if (eos && tok == *eos) break;
    const auto it = std::find_if(truncated.begin(), truncated.end(), [&](const TokenProb& tp) { return tp.token == tok; });
    rec.output.push_back(ScoredToken{tok, it->prob, raw[tok]});
    context.push_back(tok);
  }
  return rec;
}

void to_json(nlohmann::json& j, const SamplingParams& p) {
  j = nlohmann::json{{"temperature", p.temperature},
                     {"top_k", p.top_k},
                     {"top_p", p.top_p},
                     {"seed", p.seed},
                     {"max_new_tokens", p.max_new_tokens}};
}

void from_json(const nlohmann::json& j, SamplingParams& p) {
  SamplingParams d;
  p.temperature = j.value("temperature", d.temperature);
  p.top_k = j.value("top_k", d.top_k);
  p.top_p = j.value("top_p", d.top_p);
  p.seed = j.value("seed", d.seed);
  p.max_new_tokens = j.value("max_new_tokens", d.max_new_tokens);
}

void to_json(nlohmann::json& j, const ScoredToken& t) {
  j = nlohmann::json{{"token", t.token}, {"prob", t.prob}, {"raw_prob", t.raw_prob}};
}

void from_json(const nlohmann::json& j, ScoredToken& t) {
  t.token = j.at("token").get<TokenId>();
  t.prob = j.at("prob").get<double>();
  t.raw_prob = j.at("raw_prob").get<double>();
}

namespace {

nlohmann::ordered_json record_json(const GenerationRecord& r) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& t : r.output) {
    out.push_back(nlohmann::ordered_json{{"token", t.token}, {"prob", t.prob}, {"raw_prob", t.raw_prob}});
  }
  const auto& p = r.params;
  nlohmann::ordered_json params{{"temperature", p.temperature},
                                {"top_k", p.top_k},
                                {"top_p", p.top_p},
                                {"seed", p.seed},
                                {"max_new_tokens", p.max_new_tokens}};
  return nlohmann::ordered_json{{"record_id", r.record_id},
                                {"topic", r.topic},
                                {"prompt", r.prompt},
                                {"output", std::move(out)},
                                {"params", std::move(params)},
                                {"provider_id", r.provider_id}};
}

}  // namespace

void to_json(nlohmann::json& j, const GenerationRecord& r) { j = nlohmann::json::parse(record_json(r).dump()); }

void from_json(const nlohmann::json& j, GenerationRecord& r) {
  r.record_id = j.at("record_id").get<std::string>();
  r.topic = j.value("topic", std::string{});
  r.prompt = j.at("prompt").get<std::vector<TokenId>>();
  r.output = j.at("output").get<std::vector<ScoredToken>>();
  r.params = j.contains("params") ? j.at("params").get<SamplingParams>() : SamplingParams{};
  r.provider_id = j.value("provider_id", std::string{});
}

std::string record_to_jsonl(const GenerationRecord& r) { return record_json(r).dump(); }

GenerationRecord record_from_jsonl(std::string_view line) {
  try {
    return nlohmann::json::parse(line).get<GenerationRecord>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("bad generation record: ") + e.what());
  }
}

}  // namespace plexitrace
