#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

#include "plexitrace/attribution.hpp"
#include "plexitrace/corpus.hpp"
#include "plexitrace/lm_provider.hpp"
#include "plexitrace/report.hpp"
#include "plexitrace/spans.hpp"

namespace plexitrace {

struct TopicSpec {
  std::string name;
  std::string filter;  // ECMAScript regex, full match against source_label
  std::uint32_t docs_per_topic = 40;
};

struct ExperimentConfig {
  std::filesystem::path corpus_dir;
  std::filesystem::path output_dir = ".";
  nlohmann::json provider;  // {"kind": "toy" | "replay" | "http", ...}
  nlohmann::json scorer;    // provider spec for standalone perplexity; null = provider
  std::vector<TopicSpec> topics;
  std::uint32_t quote_min = 20;
  std::uint32_t quote_max = 40;
  std::uint32_t generations_per_prompt = 5;
  SamplingParams sampling{0.7, 20, 0.8, 0, 256};
  AnalysisConfig analysis;
  std::uint64_t master_seed = 0;
  std::uint32_t concurrency_limit = 1;
  std::optional<std::filesystem::path> prompts_file;  // JSON-lines {"topic", "tokens"}

  /// Throws Config on violated invariants.
  void validate() const;
};

/// Relative paths inside the config are resolved against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::ordered_json config_to_json(const ExperimentConfig& cfg);

/// FNV-1a of the canonical config JSON, hex.
std::string config_hash(const ExperimentConfig& cfg);

/// Builds a provider from a spec; toy models train on `corpus` unless the
/// spec names its own "train_corpus_dir". Errors: Config.
std::unique_ptr<LanguageModel> make_provider(const nlohmann::json& spec, const Corpus& corpus,
                                             const std::filesystem::path& base_dir = {});

struct PromptSelection {
  std::string topic;
  std::uint64_t doc_id = 0;
  std::vector<TokenId> quote;
};

/// docs_per_topic distinct eligible documents per topic, one quote each,
/// deterministic in master_seed. Errors: InsufficientDocuments.
std::vector<PromptSelection> select_prompts(const Corpus& corpus, const ExperimentConfig& cfg);

/// Prompts from cfg.prompts_file when set, otherwise select_prompts.
std::vector<PromptSelection> load_or_select_prompts(const Corpus& corpus, const ExperimentConfig& cfg);

struct GenerationJob {
  std::string record_id;  // "{topic}/{doc_id}/{generation_index}"
  std::string topic;
  std::uint64_t doc_id = 0;
  std::uint32_t generation_index = 0;
  std::vector<TokenId> prompt;
  std::uint64_t seed = 0;
};

std::uint64_t job_seed(std::uint64_t master_seed, const std::string& topic, std::uint64_t doc_id,
                       std::uint32_t generation_index);

std::vector<GenerationJob> expand_jobs(std::span<const PromptSelection> prompts, const ExperimentConfig& cfg);

/// Hash over topics, doc ids and quote tokens; equal hashes mean equal prompt sets.
std::string prompt_hash(std::span<const PromptSelection> prompts);

struct JobError {
  std::string record_id;
  std::string stage;
  std::string message;
};

struct ExperimentResult {
  std::size_t jobs = 0;
  std::size_t generated = 0;
  std::size_t resumed = 0;
  std::size_t failed = 0;
  std::size_t windows = 0;
  std::size_t degenerate_records = 0;
  std::string prompt_hash;
  std::string provider_id;
  std::vector<JobError> errors;
  std::vector<WindowAttribution> attributions;

  /// 0 success, 2 some jobs failed, 3 every job failed.
  int exit_code() const;
};

/// Generates missing records into output_dir/records.jsonl (appending; jobs
/// whose record_id is already present are skipped).
ExperimentResult run_generation(const ExperimentConfig& cfg);

/// Attributes the records in `records_path` and writes attributions.jsonl,
/// windows.jsonl and report/ under output_dir.
ExperimentResult run_analysis(const ExperimentConfig& cfg, const std::filesystem::path& records_path);

/// Generation, analysis and reports, plus output_dir/manifest.json.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

enum class SweepAxis { kTemperature, kProvider };

struct SweepSpec {
  SweepAxis axis = SweepAxis::kTemperature;
  std::vector<nlohmann::json> values;  // numbers for temperature, provider specs for provider
  ExperimentConfig base;

  void validate() const;
};

struct SweepRow {
  std::string axis_value;
  std::string provider_id;
  std::string prompt_hash;
  TopicReport total;
  int exit_code = 0;
};

/// Runs the base experiment once per axis value in output_dir/sweep_<i>/ with
/// the same prompts and per-job seeds, and writes output_dir/sweep.csv.
std::vector<SweepRow> sweep(const SweepSpec& spec);

std::string sweep_csv(std::span<const SweepRow> rows, SweepAxis axis);

}  // namespace plexitrace
