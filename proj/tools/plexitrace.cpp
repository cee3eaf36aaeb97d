// plexitrace command-line entry point.
//
// Exit codes: 0 success, 1 usage or config error, 2 partial batch failure,
// 3 total failure.

#include <charconv>
#include <fstream>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "plexitrace/corpus.hpp"
#include "plexitrace/error.hpp"
#include "plexitrace/harness.hpp"
#include "plexitrace/ngram_index.hpp"
#include "plexitrace/report.hpp"

namespace {

using namespace plexitrace;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitTotalFailure = 3;

std::vector<TokenId> parse_token_list(const std::string& text) {
  std::vector<TokenId> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (ec != std::errc{} || ptr != item.data() + item.size() || v >= kSentinel) {
      throw Error(ErrorCode::kConfig, "bad token id '" + item + "'");
    }
    out.push_back(static_cast<TokenId>(v));
  }
  return out;
}

std::vector<std::string> split_commas(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  return out;
}

void print_result(const ExperimentResult& r) {
  nlohmann::ordered_json j{{"jobs", r.jobs},       {"generated", r.generated}, {"resumed", r.resumed},
                           {"failed", r.failed},   {"windows", r.windows},     {"provider_id", r.provider_id},
                           {"exit_code", r.exit_code()}};
  if (!r.errors.empty()) j["first_error"] = r.errors.front().record_id + ": " + r.errors.front().message;
  std::cout << j.dump(2) << "\n";
}

int error_exit(const Error& e) {
  std::cerr << "plexitrace: " << e.what() << "\n";
  switch (e.code()) {
    case ErrorCode::kConfig:
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kEmptyQuery:
    case ErrorCode::kQueryTooLong:
    case ErrorCode::kTokenOutOfRange:
    case ErrorCode::kInsufficientDocuments:
      return kExitUsage;
    default:
      return kExitTotalFailure;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trace low-perplexity spans of LLM generations back to a training corpus"};
  app.require_subcommand(1);

  // corpus ingest
  auto* corpus_cmd = app.add_subcommand("corpus", "Corpus file-set utilities");
  corpus_cmd->require_subcommand(1);
  auto* ingest_cmd = corpus_cmd->add_subcommand("ingest", "Build a corpus file set from JSON-lines documents");
  std::string ingest_input, ingest_out, tokenizer_id, vocab_path;
  std::uint32_t vocab_size = 0;
  ingest_cmd->add_option("--input", ingest_input, "JSON-lines {\"source_label\", \"tokens\"}")->required();
  ingest_cmd->add_option("--out", ingest_out, "Output corpus directory")->required();
  ingest_cmd->add_option("--vocab-size", vocab_size, "Tokenizer vocabulary size")->required();
  ingest_cmd->add_option("--tokenizer-id", tokenizer_id, "Name of the tokenizer that produced the ids");
  ingest_cmd->add_option("--vocab", vocab_path, "Optional vocab.tsv decode table");

  // index build | query
  auto* index_cmd = app.add_subcommand("index", "Suffix-array index");
  index_cmd->require_subcommand(1);
  auto* build_cmd = index_cmd->add_subcommand("build", "Write sa.bin beside the corpus");
  std::string corpus_dir;
  build_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  auto* query_cmd = index_cmd->add_subcommand("query", "Count and locate a token sequence");
  std::string query_tokens;
  std::uint64_t locate_limit = 0;
  std::size_t context_radius = 0;
  bool want_context = false;
  query_cmd->add_option("--corpus", corpus_dir, "Corpus directory")->required();
  query_cmd->add_option("--tokens", query_tokens, "Comma-separated token ids")->required();
  query_cmd->add_option("--locate", locate_limit, "Return up to N occurrences");
  auto* ctx_opt = query_cmd->add_option("--context", context_radius, "Tokens of context around each occurrence");

  // experiment stages
  std::string config_path, out_override, records_path;
  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out_override, "Override output_dir");
  };
  auto* generate_cmd = app.add_subcommand("generate", "Generate records.jsonl (resumable)");
  add_config(generate_cmd);
  auto* analyze_cmd = app.add_subcommand("analyze", "Attribute windows of existing records and write reports");
  add_config(analyze_cmd);
  analyze_cmd->add_option("--records", records_path, "records.jsonl")->required()->check(CLI::ExistingFile);
  auto* run_cmd = app.add_subcommand("run", "Generate, analyze and report in one go");
  add_config(run_cmd);

  // report tables
  auto* report_cmd = app.add_subcommand("report", "Report exports");
  report_cmd->require_subcommand(1);
  auto* tables_cmd = report_cmd->add_subcommand("tables", "Write tables and figure data from attributions");
  std::string attributions_in, report_out;
  AnalysisConfig report_cfg;
  tables_cmd->add_option("--in", attributions_in, "attributions.jsonl")->required()->check(CLI::ExistingFile);
  tables_cmd->add_option("--out", report_out, "Output directory")->required();
  tables_cmd->add_option("--mem-upper", report_cfg.mem_upper, "First match count outside MEM");
  tables_cmd->add_option("--seg-upper", report_cfg.seg_upper, "First match count in FET");

  // sweep
  auto* sweep_cmd = app.add_subcommand("sweep", "Paired sweep over temperature or provider");
  add_config(sweep_cmd);
  std::string axis, values;
  sweep_cmd->add_option("--axis", axis, "temperature | provider")
      ->required()
      ->check(CLI::IsMember({"temperature", "provider"}));
  sweep_cmd->add_option("--values", values, "Comma-separated temperatures, or provider JSON files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }
  want_context = ctx_opt->count() > 0;

  auto load = [&]() {
    ExperimentConfig cfg = load_config(config_path);
    if (!out_override.empty()) cfg.output_dir = out_override;
    return cfg;
  };

  try {
    if (*ingest_cmd) {
      std::ifstream in(ingest_input);
      if (!in) throw Error(ErrorCode::kIo, "cannot open " + ingest_input);
      Vocabulary vocab{vocab_size, tokenizer_id, std::nullopt};
      if (!vocab_path.empty()) vocab.decode_table = read_vocab_tsv(vocab_path);
      const Corpus corpus = ingest_jsonl(in, std::move(vocab));
      save_corpus(corpus, ingest_out);
      std::cout << nlohmann::ordered_json{{"documents", corpus.documents.size()},
                                          {"total_tokens", corpus.total_tokens}}
                       .dump()
                << "\n";
      return kExitOk;
    }
    if (*build_cmd) {
      const auto index = build_index(corpus_dir);
      std::cout << nlohmann::ordered_json{{"suffixes", index.suffix_array().size()},
                                          {"documents", index.doc_count()}}
                       .dump()
                << "\n";
      return kExitOk;
    }
    if (*query_cmd) {
      const auto index = SuffixIndex::open(corpus_dir);
      const auto query = parse_token_list(query_tokens);
      nlohmann::ordered_json out{{"query", query}, {"count", index.count(query)}};
      if (locate_limit > 0 || want_context) {
        const auto limit = locate_limit > 0 ? locate_limit : 10;
        nlohmann::ordered_json occs = nlohmann::ordered_json::array();
        for (const auto& occ : index.locate(query, limit)) {
          nlohmann::ordered_json o{{"doc_id", occ.doc_id}, {"offset", occ.offset}, {"global_pos", occ.global_pos}};
          if (want_context) {
            const auto ctx = index.context(occ, query.size(), context_radius);
            o["context"] = {{"before", ctx.before}, {"match", ctx.match}, {"after", ctx.after}};
          }
          occs.push_back(std::move(o));
        }
        out["occurrences"] = std::move(occs);
      }
      std::cout << out.dump() << "\n";
      return kExitOk;
    }
    if (*generate_cmd) {
      const auto result = run_generation(load());
      print_result(result);
      return result.exit_code();
    }
    if (*analyze_cmd) {
      const auto result = run_analysis(load(), records_path);
      print_result(result);
      return result.exit_code();
    }
    if (*run_cmd) {
      const auto result = run_experiment(load());
      print_result(result);
      return result.exit_code();
    }
    if (*tables_cmd) {
      report_cfg.validate();
      export_reports(read_attributions(attributions_in), report_cfg, report_out);
      return kExitOk;
    }
    if (*sweep_cmd) {
      SweepSpec spec;
      spec.base = load();
      spec.axis = axis == "temperature" ? SweepAxis::kTemperature : SweepAxis::kProvider;
      for (const auto& v : split_commas(values)) {
        if (spec.axis == SweepAxis::kTemperature) {
          double t = 0;
          const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), t);
          if (ec != std::errc{} || ptr != v.data() + v.size()) throw Error(ErrorCode::kConfig, "bad temperature " + v);
          spec.values.emplace_back(t);
        } else {
          std::ifstream in(v);
          if (!in) throw Error(ErrorCode::kConfig, "cannot open provider spec " + v);
          spec.values.push_back(nlohmann::json::parse(in));
        }
      }
      const auto rows = sweep(spec);
      std::cout << sweep_csv(rows, spec.axis);
      int rc = kExitOk;
      for (const auto& r : rows) rc = std::max(rc, r.exit_code);
      return rc;
    }
  } catch (const Error& e) {
    return error_exit(e);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "plexitrace: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "plexitrace: " << e.what() << "\n";
    return kExitTotalFailure;
  }
  return kExitUsage;
}
