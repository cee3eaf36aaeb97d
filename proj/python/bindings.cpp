#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <sstream>

#include "plexitrace/attribution.hpp"
#include "plexitrace/corpus.hpp"
#include "plexitrace/error.hpp"
#include "plexitrace/harness.hpp"
#include "plexitrace/ngram_index.hpp"
#include "plexitrace/report.hpp"
#include "plexitrace/sampling.hpp"
#include "plexitrace/spans.hpp"
#include "plexitrace/toy_lm.hpp"

namespace py = pybind11;
using namespace plexitrace;

namespace {

using Tokens = std::vector<TokenId>;

py::dict result_dict(const ExperimentResult& r) {
  py::dict d;
  d["jobs"] = r.jobs;
  d["generated"] = r.generated;
  d["resumed"] = r.resumed;
  d["failed"] = r.failed;
  d["windows"] = r.windows;
  d["degenerate_records"] = r.degenerate_records;
  d["prompt_hash"] = r.prompt_hash;
  d["provider_id"] = r.provider_id;
  d["exit_code"] = r.exit_code();
  py::list errors;
  for (const auto& e : r.errors) errors.append(py::make_tuple(e.record_id, e.stage, e.message));
  d["errors"] = errors;
  return d;
}

py::dict topic_dict(const TopicReport& t) {
  py::dict d;
  d["topic"] = t.topic;
  d["n_windows"] = t.n_windows;
  d["n_match"] = t.n_match;
  d["n_rep"] = t.n_rep;
  d["match_ratio"] = t.match_ratio;
  d["rep_ratio"] = t.rep_ratio;
  d["n_spans"] = t.n_spans;
  d["span_mean"] = t.span_mean;
  d["span_std"] = t.span_std;
  d["mean_log2_standalone_ppl"] = t.mean_log2_standalone_ppl;
  return d;
}

ExperimentConfig config_from(const std::string& json_text, const std::filesystem::path& base_dir) {
  return parse_config(nlohmann::json::parse(json_text), base_dir);
}

}  // namespace

PYBIND11_MODULE(_plexitrace, m) {
  m.doc() = "Verbatim-recall attribution over a token corpus";

  // leaked on purpose: the type lives as long as the interpreter
  static py::handle error_type = py::exception<plexitrace::Error>(m, "PlexitraceError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const plexitrace::Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("code") = std::string(error_code_name(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  // corpus
  py::class_<Document>(m, "Document")
      .def_readonly("doc_id", &Document::doc_id)
      .def_readonly("tokens", &Document::tokens)
      .def_readonly("source_label", &Document::source_label);

  py::class_<Corpus>(m, "Corpus")
      .def_property_readonly("vocab_size", [](const Corpus& c) { return c.vocabulary.vocab_size; })
      .def_property_readonly("tokenizer_id", [](const Corpus& c) { return c.vocabulary.tokenizer_id; })
      .def_readonly("total_tokens", &Corpus::total_tokens)
      .def_readonly("documents", &Corpus::documents)
      .def("__len__", [](const Corpus& c) { return c.documents.size(); })
      .def("__eq__", [](const Corpus& a, const Corpus& b) { return a == b; });

  m.def(
      "ingest",
      [](const std::vector<std::pair<std::string, Tokens>>& docs, std::uint32_t vocab_size, std::string tokenizer_id,
         std::optional<std::vector<std::string>> decode_table) {
        std::vector<DocumentRecord> records;
        records.reserve(docs.size());
        for (const auto& [label, toks] : docs) records.push_back(DocumentRecord{label, toks});
        return ingest_documents(records, Vocabulary{vocab_size, std::move(tokenizer_id), std::move(decode_table)});
      },
      py::arg("documents"), py::arg("vocab_size"), py::arg("tokenizer_id") = "", py::arg("decode_table") = py::none(),
      "Build a corpus from (source_label, tokens) pairs.");
  m.def(
      "ingest_jsonl",
      [](const std::string& text, std::uint32_t vocab_size, std::string tokenizer_id) {
        std::istringstream in(text);
        return ingest_jsonl(in, Vocabulary{vocab_size, std::move(tokenizer_id), std::nullopt});
      },
      py::arg("text"), py::arg("vocab_size"), py::arg("tokenizer_id") = "");
  m.def("save_corpus", &save_corpus, py::arg("corpus"), py::arg("dir"));
  m.def("load_corpus", &load_corpus, py::arg("dir"));
  m.def(
      "decode", [](const Corpus& c, const Tokens& t) { return decode(c, t); }, py::arg("corpus"), py::arg("tokens"));

  // index
  py::class_<Occurrence>(m, "Occurrence")
      .def_readonly("doc_id", &Occurrence::doc_id)
      .def_readonly("offset", &Occurrence::offset)
      .def_readonly("global_pos", &Occurrence::global_pos)
      .def("__repr__", [](const Occurrence& o) {
        return "Occurrence(doc_id=" + std::to_string(o.doc_id) + ", offset=" + std::to_string(o.offset) +
               ", global_pos=" + std::to_string(o.global_pos) + ")";
      });

  py::class_<SuffixIndex>(m, "SuffixIndex")
      .def_static("from_corpus", &SuffixIndex::from_corpus, py::arg("corpus"))
      .def_static("open", &SuffixIndex::open, py::arg("dir"))
      .def(
          "count", [](const SuffixIndex& ix, const Tokens& q) { return ix.count(q); }, py::arg("query"))
      .def(
          "locate",
          [](const SuffixIndex& ix, const Tokens& q, std::optional<std::uint64_t> limit) {
            return ix.locate(q, limit.value_or(std::numeric_limits<std::uint64_t>::max()));
          },
          py::arg("query"), py::arg("limit") = py::none())
      .def(
          "context",
          [](const SuffixIndex& ix, const Occurrence& occ, std::size_t match_len, std::size_t radius) {
            const auto c = ix.context(occ, match_len, radius);
            return py::make_tuple(c.before, c.match, c.after);
          },
          py::arg("occurrence"), py::arg("match_len"), py::arg("radius"))
      .def_property_readonly("vocab_size", &SuffixIndex::vocab_size)
      .def_property_readonly("doc_count", &SuffixIndex::doc_count);
  m.def("build_index", &build_index, py::arg("dir"), "Build sa.bin for a saved corpus and open it.");

  // sampling
  m.def(
      "softmax", [](const std::vector<double>& z, double t) { return softmax(z, t); }, py::arg("logits"),
      py::arg("temperature") = 1.0);
  m.def(
      "apply_sampling",
      [](std::vector<double> logits, double temperature, std::uint32_t top_k, double top_p) {
        std::vector<std::pair<TokenId, double>> out;
        for (const auto& tp : apply_sampling(NextTokenDistribution{std::move(logits)},
                                             SamplingParams{temperature, top_k, top_p, 0, 1})) {
          out.emplace_back(tp.token, tp.prob);
        }
        return out;
      },
      py::arg("logits"), py::arg("temperature") = 0.7, py::arg("top_k") = 20, py::arg("top_p") = 0.8,
      "Truncated, renormalized (token, prob) pairs in descending probability.");
  m.def("token_perplexity", &token_perplexity, py::arg("prob"));
  m.def("log2_token_perplexity", &log2_token_perplexity, py::arg("prob"));

  // models and generation
  py::class_<LanguageModel>(m, "LanguageModel")
      .def_property_readonly("id", &LanguageModel::id)
      .def_property_readonly("vocab_size", &LanguageModel::vocab_size)
      .def(
          "next_logits", [](const LanguageModel& lm, const Tokens& ctx) { return lm.next_distribution(ctx).logits; },
          py::arg("context"))
      .def(
          "score", [](const LanguageModel& lm, const Tokens& t, const Tokens& ctx) { return lm.score(t, ctx); },
          py::arg("tokens"), py::arg("context") = Tokens{});

  py::class_<ToyNgramLm, LanguageModel>(m, "ToyNgramLm")
      .def(
          "probabilities", [](const ToyNgramLm& lm, const Tokens& ctx) { return lm.probabilities(ctx); },
          py::arg("context"));

  m.def(
      "train_toy_lm",
      [](const Corpus& corpus, std::uint32_t order, double smoothing, std::optional<TokenId> eos) {
        return train_toy_lm(corpus, ToyLmOptions{order, smoothing, eos});
      },
      py::arg("corpus"), py::arg("order") = 3, py::arg("smoothing") = 1.0, py::arg("eos_token") = py::none());

  py::class_<ScoredToken>(m, "ScoredToken")
      .def_readonly("token", &ScoredToken::token)
      .def_readonly("prob", &ScoredToken::prob)
      .def_readonly("raw_prob", &ScoredToken::raw_prob);

  py::class_<GenerationRecord>(m, "GenerationRecord")
      .def_readonly("record_id", &GenerationRecord::record_id)
      .def_readonly("topic", &GenerationRecord::topic)
      .def_readonly("prompt", &GenerationRecord::prompt)
      .def_readonly("output", &GenerationRecord::output)
      .def_readonly("provider_id", &GenerationRecord::provider_id)
      .def_property_readonly("tokens",
                             [](const GenerationRecord& r) {
                               Tokens t;
                               for (const auto& s : r.output) t.push_back(s.token);
                               return t;
                             })
      .def("to_jsonl", &record_to_jsonl)
      .def_static("from_jsonl", [](const std::string& line) { return record_from_jsonl(line); })
      .def("__eq__", [](const GenerationRecord& a, const GenerationRecord& b) { return a == b; });

  m.def(
      "generate",
      [](const LanguageModel& lm, const Tokens& prompt, double temperature, std::uint32_t top_k, double top_p,
         std::uint64_t seed, std::uint32_t max_new_tokens, std::string record_id, std::string topic) {
        return generate(lm, prompt, SamplingParams{temperature, top_k, top_p, seed, max_new_tokens},
                        std::move(record_id), std::move(topic));
      },
      py::arg("model"), py::arg("prompt"), py::arg("temperature") = 0.7, py::arg("top_k") = 20,
      py::arg("top_p") = 0.8, py::arg("seed") = 0, py::arg("max_new_tokens") = 256, py::arg("record_id") = "",
      py::arg("topic") = "");

  // spans and attribution
  py::class_<AnalysisConfig>(m, "AnalysisConfig")
      .def(py::init<>())
      .def_readwrite("prob_threshold", &AnalysisConfig::prob_threshold)
      .def_readwrite("window_size", &AnalysisConfig::window_size)
      .def_readwrite("min_span_len", &AnalysisConfig::min_span_len)
      .def_readwrite("mem_upper", &AnalysisConfig::mem_upper)
      .def_readwrite("seg_upper", &AnalysisConfig::seg_upper)
      .def_readwrite("max_sample_occurrences", &AnalysisConfig::max_sample_occurrences)
      .def("validate", &AnalysisConfig::validate);

  py::class_<Window>(m, "Window")
      .def_readonly("record_id", &Window::record_id)
      .def_readonly("topic", &Window::topic)
      .def_readonly("span_start", &Window::span_start)
      .def_readonly("span_len", &Window::span_len)
      .def_readonly("offset", &Window::offset)
      .def_readonly("tokens", &Window::tokens)
      .def_readonly("is_prompt_repetition", &Window::is_prompt_repetition)
      .def_property_readonly("output_position", &Window::output_position);

  m.def(
      "extract_spans",
      [](const GenerationRecord& r, const AnalysisConfig& cfg) {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (const auto& s : extract_spans(r, cfg)) out.emplace_back(s.start, s.length());
        return out;
      },
      py::arg("record"), py::arg("config") = AnalysisConfig{}, "(start, length) of each low-perplexity span.");
  m.def("record_windows", &record_windows, py::arg("record"), py::arg("config") = AnalysisConfig{});
  m.def(
      "detect_degeneration",
      [](const Tokens& t) -> std::optional<py::tuple> {
        const auto d = detect_degeneration(t);
        if (!d) return std::nullopt;
        return py::make_tuple(d->period, d->start, d->repeats);
      },
      py::arg("tokens"), "(period, start, repeats) of the longest trailing loop, or None.");

  m.def(
      "categorize",
      [](std::uint64_t c, const AnalysisConfig& cfg) { return std::string(category_name(categorize(c, cfg))); },
      py::arg("count"), py::arg("config") = AnalysisConfig{});
  m.def(
      "standalone_perplexity",
      [](const LanguageModel& lm, const Tokens& t) { return standalone_perplexity(lm, t); }, py::arg("model"),
      py::arg("tokens"));

  py::class_<WindowAttribution>(m, "WindowAttribution")
      .def_readonly("window", &WindowAttribution::window)
      .def_property_readonly("c", [](const WindowAttribution& a) { return a.match.count; })
      .def_property_readonly("sample_occurrences", [](const WindowAttribution& a) { return a.match.sample_occurrences; })
      .def_property_readonly("category", [](const WindowAttribution& a) { return std::string(category_name(a.category)); })
      .def_readonly("log2_standalone_ppl", &WindowAttribution::log2_standalone_ppl)
      .def("to_jsonl", &attribution_to_jsonl);

  m.def("attribute_record", &attribute_record, py::arg("index"), py::arg("scorer"), py::arg("record"),
        py::arg("config") = AnalysisConfig{});
  m.def("read_attributions", &read_attributions, py::arg("path"));

  // reports
  m.def(
      "aggregate",
      [](const std::vector<WindowAttribution>& attrs) {
        const auto spans = spans_from_attributions(attrs);
        py::list out;
        for (const auto& t : aggregate(attrs, spans)) out.append(topic_dict(t));
        out.append(topic_dict(aggregate_total(attrs, spans)));
        return out;
      },
      py::arg("attributions"), "Per-topic rows followed by the Total row.");
  m.def(
      "table2_csv",
      [](const std::vector<WindowAttribution>& attrs) {
        const auto spans = spans_from_attributions(attrs);
        auto rows = aggregate(attrs, spans);
        rows.push_back(aggregate_total(attrs, spans));
        return table2_csv(rows);
      },
      py::arg("attributions"));
  m.def(
      "export_reports",
      [](const std::vector<WindowAttribution>& attrs, const std::filesystem::path& dir, const AnalysisConfig& cfg) {
        export_reports(attrs, cfg, dir);
      },
      py::arg("attributions"), py::arg("dir"), py::arg("config") = AnalysisConfig{});

  // harness; configs travel as JSON text, the package wrapper accepts dicts
  m.def(
      "_run_experiment",
      [](const std::string& cfg, const std::filesystem::path& base) {
        const auto c = config_from(cfg, base);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_experiment(c);
        }
        return result_dict(r);
      },
      py::arg("config_json"), py::arg("base_dir"));
  m.def(
      "_run_generation",
      [](const std::string& cfg, const std::filesystem::path& base) {
        const auto c = config_from(cfg, base);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_generation(c);
        }
        return result_dict(r);
      },
      py::arg("config_json"), py::arg("base_dir"));
  m.def(
      "_run_analysis",
      [](const std::string& cfg, const std::filesystem::path& base, const std::filesystem::path& records) {
        const auto c = config_from(cfg, base);
        ExperimentResult r;
        {
          py::gil_scoped_release release;
          r = run_analysis(c, records);
        }
        return result_dict(r);
      },
      py::arg("config_json"), py::arg("base_dir"), py::arg("records_path"));
  m.def(
      "_config_hash", [](const std::string& cfg, const std::filesystem::path& base) {
        return config_hash(config_from(cfg, base));
      },
      py::arg("config_json"), py::arg("base_dir"));
}
