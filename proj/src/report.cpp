#include "plexitrace/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <set>

#include "io_util.hpp"
#include "plexitrace/error.hpp"

namespace plexitrace {

namespace {

std::string shortest(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::string("nan");
}

std::string fixed2(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

nlohmann::ordered_json nullable(std::optional<double> v) {
  if (!v || !std::isfinite(*v)) return nullptr;
  return *v;
}

TopicReport build_report(std::string topic, std::span<const WindowAttribution* const> windows,
                         std::span<const SpanSummary* const> spans) {
  TopicReport r;
  r.topic = std::move(topic);
  r.n_windows = windows.size();
  double ppl_sum = 0.0;
  std::uint64_t ppl_n = 0;
  for (const auto* a : windows) {
    if (a->match.count > 0) ++r.n_match;
    if (a->window.is_prompt_repetition) ++r.n_rep;
    if (std::isfinite(a->log2_standalone_ppl)) {
      ppl_sum += a->log2_standalone_ppl;
      ++ppl_n;
    }
  }
  if (r.n_windows > 0) {
    r.match_ratio = static_cast<double>(r.n_match) / static_cast<double>(r.n_windows);
    r.rep_ratio = static_cast<double>(r.n_rep) / static_cast<double>(r.n_windows);
  }
  if (ppl_n > 0) r.mean_log2_standalone_ppl = ppl_sum / static_cast<double>(ppl_n);
  std::vector<std::size_t> lengths;
  lengths.reserve(spans.size());
  for (const auto* s : spans) lengths.push_back(s->length);
  const auto stats = length_stats(lengths);
  r.n_spans = stats.count;
  r.span_mean = stats.mean;
  r.span_std = stats.stddev;
  return r;
}

void check_streams(std::span<const WindowAttribution> attributions, std::span<const SpanSummary> spans) {
  std::map<std::pair<std::string, std::size_t>, const SpanSummary*> by_key;
  for (const auto& s : spans) {
    if (!by_key.emplace(std::pair{s.record_id, s.start}, &s).second) {
      throw Error(ErrorCode::kInconsistentStreams, "duplicate span " + s.record_id + "@" + std::to_string(s.start));
    }
  }
  for (const auto& a : attributions) {
    const auto it = by_key.find({a.window.record_id, a.window.span_start});
    if (it == by_key.end() || it->second->topic != a.window.topic || it->second->length != a.window.span_len) {
      throw Error(ErrorCode::kInconsistentStreams, "window of " + a.window.record_id + "@" +
                                                       std::to_string(a.window.span_start) +
                                                       " has no matching span");
    }
  }
}

}  // namespace

std::vector<SpanSummary> spans_from_attributions(std::span<const WindowAttribution> attributions) {
  std::set<SpanSummary> seen;
  std::vector<SpanSummary> out;
  for (const auto& a : attributions) {
    SpanSummary s{a.window.record_id, a.window.topic, a.window.span_start, a.window.span_len};
    if (seen.insert(s).second) out.push_back(std::move(s));
  }
  return out;
}

std::vector<TopicReport> aggregate(std::span<const WindowAttribution> attributions, std::span<const SpanSummary> spans) {
  check_streams(attributions, spans);
  std::map<std::string, std::pair<std::vector<const WindowAttribution*>, std::vector<const SpanSummary*>>> groups;
  for (const auto& a : attributions) groups[a.window.topic].first.push_back(&a);
  for (const auto& s : spans) groups[s.topic].second.push_back(&s);
  std::vector<TopicReport> out;
  for (const auto& [topic, g] : groups) out.push_back(build_report(topic, g.first, g.second));
  return out;
}

TopicReport aggregate_total(std::span<const WindowAttribution> attributions, std::span<const SpanSummary> spans) {
  check_streams(attributions, spans);
  std::vector<const WindowAttribution*> w;
  std::vector<const SpanSummary*> s;
  for (const auto& a : attributions) w.push_back(&a);
  for (const auto& x : spans) s.push_back(&x);
  return build_report(std::string(kTotalRow), w, s);
}

std::vector<CategoryDistribution> category_distribution(std::span<const WindowAttribution> attributions) {
  std::map<std::string, std::array<std::uint64_t, 4>> counts;
  for (const auto& a : attributions) ++counts[a.window.topic][static_cast<std::size_t>(a.category)];
  std::vector<CategoryDistribution> out;
  for (const auto& [topic, c] : counts) {
    CategoryDistribution d;
    d.topic = topic;
    d.counts = c;
    const std::uint64_t total = c[0] + c[1] + c[2] + c[3];
    for (std::size_t i = 0; i < 4; ++i) d.shares[i] = static_cast<double>(c[i]) / static_cast<double>(total);
    out.push_back(std::move(d));
  }
  return out;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw Error(ErrorCode::kInvalidArgument, "quantile of empty data");
  const double h = static_cast<double>(sorted.size() - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::vector<BoxStats> boxplot_data(std::span<const WindowAttribution> attributions) {
  std::map<std::string, std::vector<double>> values;
  for (const auto& a : attributions) {
    if (a.match.count > 0) values[a.window.topic].push_back(static_cast<double>(a.match.count));
  }
  std::vector<BoxStats> out;
  for (auto& [topic, v] : values) {
    std::sort(v.begin(), v.end());
    BoxStats b;
    b.topic = topic;
    b.n = v.size();
    b.min = v.front();
    b.max = v.back();
    b.q1 = quantile_sorted(v, 0.25);
    b.median = quantile_sorted(v, 0.5);
    b.q3 = quantile_sorted(v, 0.75);
    const double iqr = b.q3 - b.q1;
    for (double x : v) {
      if (x < b.q1 - 1.5 * iqr || x > b.q3 + 1.5 * iqr) b.outliers.push_back(x);
    }
    out.push_back(std::move(b));
  }
  return out;
}

std::vector<ScatterPoint> scatter_data(std::span<const WindowAttribution> attributions) {
  std::vector<ScatterPoint> out;
  out.reserve(attributions.size());
  for (const auto& a : attributions) {
    out.push_back(ScatterPoint{a.window.record_id, a.window.topic, a.window.output_position(), a.match.count,
                               a.log2_standalone_ppl, a.category});
  }
  std::stable_sort(out.begin(), out.end(), [](const ScatterPoint& x, const ScatterPoint& y) {
    return std::tie(x.record_id, x.position) < std::tie(y.record_id, y.position);
  });
  return out;
}

std::string format_percent(std::optional<double> ratio) {
  if (!ratio || !std::isfinite(*ratio)) return "";
  const double pct = *ratio * 100.0;
  if (pct == 0.0) return "0%";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1e", pct);  // rounds to two significant figures
  const double rounded = std::strtod(buf, nullptr);
  const int magnitude = static_cast<int>(std::floor(std::log10(std::fabs(rounded))));
  const int decimals = std::max(0, 1 - magnitude);
  std::snprintf(buf, sizeof buf, "%.*f%%", decimals, rounded);
  return buf;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

std::string table1_csv(std::span<const TopicReport> rows) {
  std::string out = "Topic,L_mean,L_std,spans\n";
  for (const auto& r : rows) {
    out += csv_field(r.topic) + "," + fixed2(r.span_mean) + "," + fixed2(r.span_std) + "," +
           std::to_string(r.n_spans) + "\n";
  }
  return out;
}

std::string table2_csv(std::span<const TopicReport> rows) {
  std::string out = "Topic,N,N_{c>0},N_{c>0}/N,N_rep/N\n";
  for (const auto& r : rows) {
    out += csv_field(r.topic) + "," + std::to_string(r.n_windows) + "," + std::to_string(r.n_match) + "," +
           format_percent(r.match_ratio) + "," + format_percent(r.rep_ratio) + "\n";
  }
  return out;
}

std::string table4_csv(std::span<const CategoryDistribution> rows) {
  std::string out = "Topic,STH,MEM,SEG,FET\n";
  for (const auto& d : rows) {
    out += csv_field(d.topic);
    for (double s : d.shares) out += "," + format_percent(s);
    out += "\n";
  }
  return out;
}

std::string fig2_json(std::span<const BoxStats> boxes) {
  nlohmann::ordered_json arr = nlohmann::ordered_json::array();
  for (const auto& b : boxes) {
    arr.push_back(nlohmann::ordered_json{{"topic", b.topic},
                                         {"n", b.n},
                                         {"min", b.min},
                                         {"q1", b.q1},
                                         {"median", b.median},
                                         {"q3", b.q3},
                                         {"max", b.max},
                                         {"outliers", b.outliers}});
  }
  return nlohmann::ordered_json{{"quantile_method", "linear (h = (n-1)p)"}, {"values", "c > 0"}, {"topics", arr}}
             .dump(2) +
         "\n";
}

std::string fig3_csv(std::span<const ScatterPoint> points) {
  std::string out = "record_id,topic,position,c,log2_standalone_ppl,category\n";
  for (const auto& p : points) {
    out += csv_field(p.record_id) + "," + csv_field(p.topic) + "," + std::to_string(p.position) + "," +
           std::to_string(p.c) + "," + shortest(p.log2_standalone_ppl) + "," + std::string(category_name(p.category)) +
           "\n";
  }
  return out;
}

std::string fig3_meta_json(const AnalysisConfig& cfg) {
  return nlohmann::ordered_json{{"category_boundaries", {{"mem_lower", 1}, {"seg_lower", cfg.mem_upper},
                                                         {"fet_lower", cfg.seg_upper}}},
                                {"x", "c"},
                                {"y", "log2_standalone_ppl"}}
             .dump(2) +
         "\n";
}

std::string summary_json(std::span<const TopicReport> rows, std::span<const CategoryDistribution> dists) {
  nlohmann::ordered_json topics = nlohmann::ordered_json::array();
  for (const auto& r : rows) {
    topics.push_back(nlohmann::ordered_json{{"topic", r.topic},
                                            {"N", r.n_windows},
                                            {"N_match", r.n_match},
                                            {"match_ratio", nullable(r.match_ratio)},
                                            {"N_rep", r.n_rep},
                                            {"rep_ratio", nullable(r.rep_ratio)},
                                            {"spans", r.n_spans},
                                            {"span_mean", r.span_mean},
                                            {"span_std", r.span_std},
                                            {"mean_log2_standalone_ppl", nullable(r.mean_log2_standalone_ppl)}});
  }
  nlohmann::ordered_json cats = nlohmann::ordered_json::array();
  for (const auto& d : dists) {
    nlohmann::ordered_json shares;
    nlohmann::ordered_json counts;
    for (Category c : kAllCategories) {
      shares[std::string(category_name(c))] = d.shares[static_cast<std::size_t>(c)];
      counts[std::string(category_name(c))] = d.counts[static_cast<std::size_t>(c)];
    }
    cats.push_back(nlohmann::ordered_json{{"topic", d.topic}, {"counts", counts}, {"shares", shares}});
  }
  return nlohmann::ordered_json{{"topics", topics}, {"categories", cats}}.dump(2) + "\n";
}

void export_reports(std::span<const WindowAttribution> attributions, const AnalysisConfig& cfg,
                    const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(ErrorCode::kIo, "cannot create " + dir.string() + ": " + ec.message());

  const auto spans = spans_from_attributions(attributions);
  auto rows = aggregate(attributions, spans);
  const auto dists = category_distribution(attributions);
  rows.push_back(aggregate_total(attributions, spans));

  detail::write_file(dir / "table1_spans.csv", table1_csv(rows));
  detail::write_file(dir / "table2_matches.csv", table2_csv(rows));
  detail::write_file(dir / "table4_categories.csv", table4_csv(dists));
  detail::write_file(dir / "fig2_boxplot.json", fig2_json(boxplot_data(attributions)));
  detail::write_file(dir / "fig3_scatter.csv", fig3_csv(scatter_data(attributions)));
  detail::write_file(dir / "fig3_scatter_meta.json", fig3_meta_json(cfg));
  detail::write_file(dir / "summary.json", summary_json(rows, dists));
}

std::vector<WindowAttribution> read_attributions(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIo, "cannot open " + path.string());
  std::vector<WindowAttribution> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    out.push_back(attribution_from_jsonl(line));
  }
  return out;
}

}  // namespace plexitrace
