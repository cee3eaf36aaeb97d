#include "plexitrace/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <mutex>
#include <regex>
#include <set>
#include <thread>
#include <unordered_set>

#include "io_util.hpp"
#include "plexitrace/error.hpp"
#include "plexitrace/ngram_index.hpp"
#include "plexitrace/providers.hpp"
#include "plexitrace/toy_lm.hpp"

namespace plexitrace {

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

nlohmann::json resolve_provider_paths(nlohmann::json spec, const std::filesystem::path& base) {
  if (!spec.is_object()) return spec;
  for (const char* key : {"path", "train_corpus_dir"}) {
    if (spec.contains(key) && spec[key].is_string()) {
      spec[key] = resolve(base, spec[key].get<std::string>()).string();
    }
  }
  return spec;
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key) || j.at(key).is_null()) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, std::string("config key '") + key + "': " + e.what());
  }
}

std::optional<TokenId> optional_token(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return get_or<TokenId>(j, key, 0);
}

std::string shortest(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// Runs fn(i) for i in [0, n) on up to `limit` threads. With limit 1 the calls
// happen in index order on the calling thread.
template <typename Fn>
void parallel_for(std::size_t n, std::uint32_t limit, Fn&& fn) {
  if (limit <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::jthread> workers;
  const std::size_t threads = std::min<std::size_t>(limit, n);
  workers.reserve(threads);
  for (std::size_t t = 0; t < threads; ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::vector<std::string> lines;
  std::ifstream in(path);
  if (!in) return lines;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") != std::string::npos) lines.push_back(line);
  }
  return lines;
}

SuffixIndex open_or_build_index(const std::filesystem::path& corpus_dir) {
  if (std::filesystem::exists(CorpusFiles{corpus_dir}.suffix_array())) return SuffixIndex::open(corpus_dir);
  return build_index(corpus_dir);
}

}  // namespace

void ExperimentConfig::validate() const {
  if (corpus_dir.empty()) throw Error(ErrorCode::kConfig, "corpus_dir is required");
  if (!provider.is_object() || !provider.contains("kind")) {
    throw Error(ErrorCode::kConfig, "provider must be an object with a 'kind'");
  }
  if (!scorer.is_null() && (!scorer.is_object() || !scorer.contains("kind"))) {
    throw Error(ErrorCode::kConfig, "scorer must be null or a provider object");
  }
  if (topics.empty() && !prompts_file) throw Error(ErrorCode::kConfig, "at least one topic is required");
  for (const auto& t : topics) {
    if (t.name.empty()) throw Error(ErrorCode::kConfig, "topic name must be non-empty");
    if (t.docs_per_topic < 1) throw Error(ErrorCode::kConfig, "docs_per_topic must be >= 1 for " + t.name);
  }
  if (generations_per_prompt < 1) throw Error(ErrorCode::kConfig, "generations_per_prompt must be >= 1");
  if (quote_min < 1 || quote_min > quote_max) throw Error(ErrorCode::kConfig, "need 0 < quote_min <= quote_max");
  if (concurrency_limit < 1) throw Error(ErrorCode::kConfig, "concurrency_limit must be >= 1");
  try {
    sampling.validate();
    analysis.validate();
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
}

ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw Error(ErrorCode::kConfig, "config must be a JSON object");
  ExperimentConfig cfg;
  cfg.corpus_dir = resolve(base_dir, get_or<std::string>(j, "corpus_dir", ""));
  cfg.output_dir = resolve(base_dir, get_or<std::string>(j, "output_dir", "."));
  cfg.provider = resolve_provider_paths(j.value("provider", nlohmann::json{}), base_dir);
  cfg.scorer = resolve_provider_paths(j.value("scorer", nlohmann::json{}), base_dir);
  for (const auto& t : j.value("topics", nlohmann::json::array())) {
    TopicSpec spec;
    spec.name = get_or<std::string>(t, "name", "");
    spec.filter = get_or<std::string>(t, "filter", spec.name);
    spec.docs_per_topic = get_or<std::uint32_t>(t, "docs_per_topic", 40);
    cfg.topics.push_back(std::move(spec));
  }
  cfg.quote_min = get_or<std::uint32_t>(j, "quote_min", cfg.quote_min);
  cfg.quote_max = get_or<std::uint32_t>(j, "quote_max", cfg.quote_max);
  cfg.generations_per_prompt = get_or<std::uint32_t>(j, "generations_per_prompt", cfg.generations_per_prompt);
  if (j.contains("sampling")) {
    const auto& s = j.at("sampling");
    cfg.sampling.temperature = get_or<double>(s, "temperature", cfg.sampling.temperature);
    cfg.sampling.top_k = get_or<std::uint32_t>(s, "top_k", cfg.sampling.top_k);
    cfg.sampling.top_p = get_or<double>(s, "top_p", cfg.sampling.top_p);
    cfg.sampling.max_new_tokens = get_or<std::uint32_t>(s, "max_new_tokens", cfg.sampling.max_new_tokens);
  }
  if (j.contains("analysis")) {
    const auto& a = j.at("analysis");
    auto& an = cfg.analysis;
    an.prob_threshold = get_or<double>(a, "prob_threshold", an.prob_threshold);
    an.window_size = get_or<std::uint32_t>(a, "window_size", an.window_size);
    an.min_span_len = get_or<std::uint32_t>(a, "min_span_len", std::max(an.window_size, an.min_span_len));
    an.mem_upper = get_or<std::uint64_t>(a, "mem_upper", an.mem_upper);
    an.seg_upper = get_or<std::uint64_t>(a, "seg_upper", an.seg_upper);
    an.max_sample_occurrences = get_or<std::uint32_t>(a, "max_sample_occurrences", an.max_sample_occurrences);
  }
  cfg.master_seed = get_or<std::uint64_t>(j, "master_seed", 0);
  cfg.concurrency_limit = get_or<std::uint32_t>(j, "concurrency_limit", 1);
  if (j.contains("prompts_file") && !j.at("prompts_file").is_null()) {
    cfg.prompts_file = resolve(base_dir, j.at("prompts_file").get<std::string>());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(detail::read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kConfig, path.string() + ": " + e.what());
  } catch (const Error& e) {
    throw Error(ErrorCode::kConfig, e.what());
  }
  return parse_config(j, path.parent_path());
}

nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg) {
  nlohmann::ordered_json topics = nlohmann::ordered_json::array();
  for (const auto& t : cfg.topics) {
    topics.push_back({{"name", t.name}, {"filter", t.filter}, {"docs_per_topic", t.docs_per_topic}});
  }
  const auto& a = cfg.analysis;
  const auto& s = cfg.sampling;
  return nlohmann::ordered_json{
      {"corpus_dir", cfg.corpus_dir.string()},
      {"output_dir", cfg.output_dir.string()},
      {"provider", nlohmann::ordered_json::parse(cfg.provider.dump())},
      {"scorer", nlohmann::ordered_json::parse(cfg.scorer.dump())},
      {"topics", topics},
      {"quote_min", cfg.quote_min},
      {"quote_max", cfg.quote_max},
      {"generations_per_prompt", cfg.generations_per_prompt},
      {"sampling",
       {{"temperature", s.temperature}, {"top_k", s.top_k}, {"top_p", s.top_p}, {"max_new_tokens", s.max_new_tokens}}},
      {"analysis",
       {{"prob_threshold", a.prob_threshold},
        {"window_size", a.window_size},
        {"min_span_len", a.min_span_len},
        {"mem_upper", a.mem_upper},
        {"seg_upper", a.seg_upper},
        {"max_sample_occurrences", a.max_sample_occurrences}}},
      {"master_seed", cfg.master_seed},
      {"concurrency_limit", cfg.concurrency_limit},
      {"prompts_file", cfg.prompts_file ? nlohmann::ordered_json(cfg.prompts_file->string()) : nlohmann::ordered_json()}};
}

std::string config_hash(const ExperimentConfig& cfg) {
  auto j = config_to_json(cfg);
  // Output location and parallelism do not change results.
  j.erase("output_dir");
  j.erase("concurrency_limit");
  return hex64(fnv1a64(j.dump()));
}

std::unique_ptr<LanguageModel> make_provider(const nlohmann::json& raw_spec, const Corpus& corpus,
                                             const std::filesystem::path& base_dir) {
  const nlohmann::json spec = resolve_provider_paths(raw_spec, base_dir);
  const std::string kind = get_or<std::string>(spec, "kind", "");
  if (kind == "toy") {
    ToyLmOptions opts;
    opts.order = get_or<std::uint32_t>(spec, "order", opts.order);
    opts.smoothing = get_or<double>(spec, "smoothing", opts.smoothing);
    opts.eos_token = optional_token(spec, "eos_token");
    if (spec.contains("train_corpus_dir") && spec["train_corpus_dir"].is_string()) {
      return train_toy_lm(load_corpus(spec["train_corpus_dir"].get<std::string>()), opts);
    }
    return train_toy_lm(corpus, opts);
  }
  if (kind == "replay") {
    const auto path = get_or<std::string>(spec, "path", "");
    if (path.empty()) throw Error(ErrorCode::kConfig, "replay provider needs a 'path'");
    return ReplayProvider::from_jsonl(path, get_or<std::uint32_t>(spec, "vocab_size", corpus.vocabulary.vocab_size));
  }
  if (kind == "http") {
    HttpProviderConfig hc;
    hc.base_url = get_or<std::string>(spec, "base_url", hc.base_url);
    hc.path = get_or<std::string>(spec, "path", hc.path);
    hc.model = get_or<std::string>(spec, "model", hc.model);
    hc.vocab_size = get_or<std::uint32_t>(spec, "vocab_size", corpus.vocabulary.vocab_size);
    hc.top_logprobs = get_or<std::uint32_t>(spec, "top_logprobs", hc.top_logprobs);
    hc.bos_token = optional_token(spec, "bos_token");
    hc.eos_token = optional_token(spec, "eos_token");
    hc.max_context = get_or<std::size_t>(spec, "max_context", hc.max_context);
    hc.max_attempts = get_or<int>(spec, "max_attempts", hc.max_attempts);
    hc.initial_backoff = std::chrono::milliseconds(get_or<int>(spec, "initial_backoff_ms", 200));
    hc.timeout = std::chrono::seconds(get_or<int>(spec, "timeout_s", 60));
    hc.max_in_flight = get_or<int>(spec, "max_in_flight", hc.max_in_flight);
    hc.load_api_key_from_env();
    return std::make_unique<HttpProvider>(std::move(hc));
  }
  throw Error(ErrorCode::kConfig, "unknown provider kind '" + kind + "'");
}

std::vector<PromptSelection> select_prompts(const Corpus& corpus, const ExperimentConfig& cfg) {
  std::vector<PromptSelection> out;
  for (const auto& topic : cfg.topics) {
    std::regex filter;
    try {
      filter = std::regex(topic.filter, std::regex::ECMAScript);
    } catch (const std::regex_error& e) {
      throw Error(ErrorCode::kConfig, "topic " + topic.name + ": bad filter: " + e.what());
    }
    std::vector<std::uint64_t> eligible;
    for (const auto& doc : corpus.documents) {
      if (doc.tokens.size() >= cfg.quote_min && std::regex_match(doc.source_label, filter)) {
        eligible.push_back(doc.doc_id);
      }
    }
    if (eligible.size() < topic.docs_per_topic) {
      throw Error(ErrorCode::kInsufficientDocuments, "topic '" + topic.name + "' has " +
                                                         std::to_string(eligible.size()) + " eligible documents, needs " +
                                                         std::to_string(topic.docs_per_topic));
    }
    Rng rng(derive_seed(cfg.master_seed, "topic:" + topic.name));
    for (std::size_t i = 0; i < topic.docs_per_topic; ++i) {
      const auto j = i + uniform_below(rng, eligible.size() - i);
      std::swap(eligible[i], eligible[j]);
    }
    eligible.resize(topic.docs_per_topic);
    std::sort(eligible.begin(), eligible.end());
    for (std::uint64_t doc_id : eligible) {
      Rng qrng(derive_seed(cfg.master_seed, "quote:" + topic.name + "/" + std::to_string(doc_id)));
      auto quote = random_quote(corpus.documents[doc_id], cfg.quote_min, cfg.quote_max, qrng);
      out.push_back(PromptSelection{topic.name, doc_id, std::move(quote.tokens)});
    }
  }
  return out;
}

std::vector<PromptSelection> load_or_select_prompts(const Corpus& corpus, const ExperimentConfig& cfg) {
  if (!cfg.prompts_file) return select_prompts(corpus, cfg);
  std::ifstream in(*cfg.prompts_file);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + cfg.prompts_file->string());
  std::vector<PromptSelection> out;
  std::map<std::string, std::uint64_t> per_topic;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      PromptSelection p;
      p.topic = j.at("topic").get<std::string>();
      p.doc_id = j.contains("doc_id") ? j.at("doc_id").get<std::uint64_t>() : per_topic[p.topic];
      ++per_topic[p.topic];
      p.quote = j.at("tokens").get<std::vector<TokenId>>();
      if (p.quote.empty()) throw Error(ErrorCode::kConfig, "empty prompt in prompts_file");
      out.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfig, "prompts_file: " + std::string(e.what()));
    }
  }
  return out;
}

std::uint64_t job_seed(std::uint64_t master_seed, const std::string& topic, std::uint64_t doc_id,
                       std::uint32_t generation_index) {
  return derive_seed(master_seed,
                     "job:" + topic + "/" + std::to_string(doc_id) + "/" + std::to_string(generation_index));
}

std::vector<GenerationJob> expand_jobs(std::span<const PromptSelection> prompts, const ExperimentConfig& cfg) {
  std::vector<GenerationJob> jobs;
  jobs.reserve(prompts.size() * cfg.generations_per_prompt);
  for (const auto& p : prompts) {
    for (std::uint32_t g = 0; g < cfg.generations_per_prompt; ++g) {
      GenerationJob job;
      job.record_id = p.topic + "/" + std::to_string(p.doc_id) + "/" + std::to_string(g);
      job.topic = p.topic;
      job.doc_id = p.doc_id;
      job.generation_index = g;
      job.prompt = p.quote;
      job.seed = job_seed(cfg.master_seed, p.topic, p.doc_id, g);
      jobs.push_back(std::move(job));
    }
  }
  return jobs;
}

std::string prompt_hash(std::span<const PromptSelection> prompts) {
  std::uint64_t h = fnv1a64("");
  for (const auto& p : prompts) {
    h = fnv1a64(p.topic, h);
    h = fnv1a64("/" + std::to_string(p.doc_id) + ":", h);
    h = fnv1a64(detail::bytes_of(std::span<const TokenId>(p.quote)), h);
  }
  return hex64(h);
}

int ExperimentResult::exit_code() const {
  if (jobs == 0) return 0;
  if (failed >= jobs) return 3;
  return failed > 0 ? 2 : 0;
}

ExperimentResult run_generation(const ExperimentConfig& cfg) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg.corpus_dir);
  const auto provider = make_provider(cfg.provider, corpus);
  const auto prompts = load_or_select_prompts(corpus, cfg);
  const auto jobs = expand_jobs(prompts, cfg);

  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + cfg.output_dir.string() + ": " + ec.message());
  const auto records_path = cfg.output_dir / "records.jsonl";

  // Keep well-formed lines only, so a torn final line from an interrupted run
  // does not survive the resume.
  std::unordered_set<std::string> done;
  std::string kept;
  for (const auto& line : read_lines(records_path)) {
    try {
      const auto rec = record_from_jsonl(line);
      if (done.insert(rec.record_id).second) kept += line + "\n";
    } catch (const Error&) {
    }
  }
  detail::write_file(records_path, kept);

  ExperimentResult result;
  result.jobs = jobs.size();
  result.prompt_hash = prompt_hash(prompts);
  result.provider_id = provider->id();

  std::vector<const GenerationJob*> pending;
  for (const auto& job : jobs) {
    if (done.count(job.record_id)) {
      ++result.resumed;
    } else {
      pending.push_back(&job);
    }
  }

  std::ofstream out(records_path, std::ios::app | std::ios::binary);
  if (!out) throw Error(ErrorCode::kIo, "cannot append to " + records_path.string());
  std::mutex mu;
  parallel_for(pending.size(), cfg.concurrency_limit, [&](std::size_t i) {
    const GenerationJob& job = *pending[i];
    try {
      GenerationRecord rec;
      if (auto replayed = provider->recorded(job.record_id)) {
        rec = std::move(*replayed);
      } else {
        SamplingParams params = cfg.sampling;
        params.seed = job.seed;
        rec = generate(*provider, job.prompt, params, job.record_id, job.topic);
      }
      const std::string line = record_to_jsonl(rec) + "\n";
      std::lock_guard lock(mu);
      out << line;
      out.flush();
      ++result.generated;
    } catch (const std::exception& e) {
      std::lock_guard lock(mu);
      result.errors.push_back(JobError{job.record_id, "generate", e.what()});
    }
  });
  if (!out) throw Error(ErrorCode::kIo, "write failed: " + records_path.string());
  result.failed = result.errors.size();
  return result;
}

ExperimentResult run_analysis(const ExperimentConfig& cfg, const std::filesystem::path& records_path) {
  cfg.validate();
  const Corpus corpus = load_corpus(cfg.corpus_dir);
  const SuffixIndex index = open_or_build_index(cfg.corpus_dir);
  const auto scorer = make_provider(cfg.scorer.is_null() ? cfg.provider : cfg.scorer, corpus);

  std::vector<GenerationRecord> records;
  const auto lines = read_lines(records_path);
  if (lines.empty() && !std::filesystem::exists(records_path)) {
    throw Error(ErrorCode::kIo, "cannot open " + records_path.string());
  }
  for (const auto& line : lines) records.push_back(record_from_jsonl(line));

  ExperimentResult result;
  result.jobs = records.size();
  result.provider_id = scorer->id();

  std::vector<std::vector<WindowAttribution>> per_record(records.size());
  std::vector<std::optional<JobError>> errors(records.size());
  std::atomic<std::size_t> degenerate{0};
  parallel_for(records.size(), cfg.concurrency_limit, [&](std::size_t i) {
    try {
      if (detect_degeneration(records[i])) ++degenerate;
      per_record[i] = attribute_record(index, *scorer, records[i], cfg.analysis);
    } catch (const std::exception& e) {
      errors[i] = JobError{records[i].record_id, "attribute", e.what()};
    }
  });
  result.degenerate_records = degenerate;

  std::string windows_out;
  std::string attributions_out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (errors[i]) {
      result.errors.push_back(*errors[i]);
      continue;
    }
    for (auto& a : per_record[i]) {
      windows_out += window_to_jsonl(a.window) + "\n";
      attributions_out += attribution_to_jsonl(a) + "\n";
      result.attributions.push_back(std::move(a));
    }
  }
  result.failed = result.errors.size();
  result.windows = result.attributions.size();

  std::error_code ec;
  std::filesystem::create_directories(cfg.output_dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + cfg.output_dir.string() + ": " + ec.message());
  detail::write_file(cfg.output_dir / "windows.jsonl", windows_out);
  detail::write_file(cfg.output_dir / "attributions.jsonl", attributions_out);
  export_reports(result.attributions, cfg.analysis, cfg.output_dir / "report");
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  ExperimentResult gen = run_generation(cfg);
  ExperimentResult result = gen;
  std::set<std::string> failed_ids;
  for (const auto& e : gen.errors) failed_ids.insert(e.record_id);

  if (gen.failed < gen.jobs) {
    ExperimentResult an = run_analysis(cfg, cfg.output_dir / "records.jsonl");
    for (auto& e : an.errors) {
      failed_ids.insert(e.record_id);
      result.errors.push_back(std::move(e));
    }
    result.windows = an.windows;
    result.degenerate_records = an.degenerate_records;
    result.attributions = std::move(an.attributions);
  }
  result.failed = failed_ids.size();

  nlohmann::ordered_json errors = nlohmann::ordered_json::array();
  for (const auto& e : result.errors) {
    errors.push_back({{"record_id", e.record_id}, {"stage", e.stage}, {"message", e.message}});
  }
  const nlohmann::ordered_json manifest{{"config_hash", config_hash(cfg)},
                                        {"master_seed", cfg.master_seed},
                                        {"provider_id", result.provider_id},
                                        {"prompt_hash", result.prompt_hash},
                                        {"jobs", result.jobs},
                                        {"resumed", result.resumed},
                                        {"generated", result.generated},
                                        {"failed", result.failed},
                                        {"windows", result.windows},
                                        {"degenerate_records", result.degenerate_records},
                                        {"exit_code", result.exit_code()},
                                        {"errors", errors},
                                        {"config", config_to_json(cfg)}};
  detail::write_file(cfg.output_dir / "manifest.json", manifest.dump(2) + "\n");
  return result;
}

void SweepSpec::validate() const {
  if (values.empty()) throw Error(ErrorCode::kConfig, "sweep needs at least one value");
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (axis == SweepAxis::kTemperature && !values[i].is_number()) {
      throw Error(ErrorCode::kConfig, "temperature sweep values must be numbers");
    }
    if (axis == SweepAxis::kProvider && !values[i].is_object()) {
      throw Error(ErrorCode::kConfig, "provider sweep values must be provider objects");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (values[i] == values[j]) throw Error(ErrorCode::kConfig, "sweep values must be distinct");
    }
  }
  base.validate();
}

std::vector<SweepRow> sweep(const SweepSpec& spec) {
  spec.validate();
  std::vector<SweepRow> rows;
  for (std::size_t i = 0; i < spec.values.size(); ++i) {
    ExperimentConfig cfg = spec.base;
    cfg.output_dir = spec.base.output_dir / ("sweep_" + std::to_string(i));
    SweepRow row;
    if (spec.axis == SweepAxis::kTemperature) {
      cfg.sampling.temperature = spec.values[i].get<double>();
      row.axis_value = shortest(cfg.sampling.temperature);
    } else {
      cfg.provider = spec.values[i];
      row.axis_value = spec.values[i].dump();
    }
    cfg.validate();
    const auto result = run_experiment(cfg);
    row.provider_id = result.provider_id;
    row.prompt_hash = result.prompt_hash;
    row.exit_code = result.exit_code();
    row.total = aggregate_total(result.attributions, spans_from_attributions(result.attributions));
    rows.push_back(std::move(row));
  }
  detail::write_file(spec.base.output_dir / "sweep.csv", sweep_csv(rows, spec.axis));
  return rows;
}

std::string sweep_csv(std::span<const SweepRow> rows, SweepAxis axis) {
  std::string out = axis == SweepAxis::kTemperature ? "temperature" : "provider";
  out += ",provider_id,N,N_{c>0},N_{c>0}/N,N_rep,mean_log2_standalone_ppl,prompt_hash\n";
  for (const auto& r : rows) {
    const auto& t = r.total;
    out += csv_field(r.axis_value) + "," + csv_field(r.provider_id) + "," + std::to_string(t.n_windows) + "," +
           std::to_string(t.n_match) + "," + format_percent(t.match_ratio) + "," + std::to_string(t.n_rep) + "," +
           (t.mean_log2_standalone_ppl ? shortest(*t.mean_log2_standalone_ppl) : std::string()) + "," +
           r.prompt_hash + "\n";
  }
  return out;
}

}  // namespace plexitrace
