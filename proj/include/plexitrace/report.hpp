#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "plexitrace/attribution.hpp"

namespace plexitrace {

inline constexpr std::string_view kTotalRow = "Total";

struct SpanSummary {
  std::string record_id;
  std::string topic;
  std::size_t start = 0;
  std::size_t length = 0;

  auto operator<=>(const SpanSummary&) const = default;
};

struct TopicReport {
  std::string topic;
  std::uint64_t n_windows = 0;  // N
  std::uint64_t n_match = 0;    // N_{c>0}
  std::uint64_t n_rep = 0;
  std::optional<double> match_ratio;  // null when N == 0
  std::optional<double> rep_ratio;
  std::uint64_t n_spans = 0;
  double span_mean = 0.0;
  double span_std = 0.0;
  std::optional<double> mean_log2_standalone_ppl;
};

struct CategoryDistribution {
  std::string topic;
  std::array<std::uint64_t, 4> counts{};  // STH, MEM, SEG, FET
  std::array<double, 4> shares{};
};

struct BoxStats {
  std::string topic;
  std::size_t n = 0;
  double min = 0, q1 = 0, median = 0, q3 = 0, max = 0;
  std::vector<double> outliers;  // beyond 1.5 IQR from the quartiles, ascending
};

struct ScatterPoint {
  std::string record_id;
  std::string topic;
  std::size_t position = 0;  // window start within the record's output
  std::uint64_t c = 0;
  double log2_standalone_ppl = 0.0;
  Category category = Category::kSth;
};

/// One summary per distinct (record_id, span_start) among the attributions.
std::vector<SpanSummary> spans_from_attributions(std::span<const WindowAttribution> attributions);

/// Per-topic counters, sorted by topic. Every attribution must belong to a
/// listed span of the same topic. Errors: InconsistentStreams.
std::vector<TopicReport> aggregate(std::span<const WindowAttribution> attributions, std::span<const SpanSummary> spans);

/// Counters pooled over all topics, labelled kTotalRow.
TopicReport aggregate_total(std::span<const WindowAttribution> attributions, std::span<const SpanSummary> spans);

std::vector<CategoryDistribution> category_distribution(std::span<const WindowAttribution> attributions);

/// Linear-interpolation quantile (h = (n-1)p) of ascending data.
double quantile_sorted(std::span<const double> sorted, double p);

/// Box statistics of c over windows with c > 0, per topic that has any.
std::vector<BoxStats> boxplot_data(std::span<const WindowAttribution> attributions);

/// One point per window ordered by (record_id, position).
std::vector<ScatterPoint> scatter_data(std::span<const WindowAttribution> attributions);

/// Ratio as a percentage with two significant figures: 0.38 -> "38%", 0.079 -> "7.9%".
std::string format_percent(std::optional<double> ratio);

/// RFC 4180 field quoting.
std::string csv_field(std::string_view s);

std::string table1_csv(std::span<const TopicReport> rows);
std::string table2_csv(std::span<const TopicReport> rows);
std::string table4_csv(std::span<const CategoryDistribution> rows);
std::string fig2_json(std::span<const BoxStats> boxes);
std::string fig3_csv(std::span<const ScatterPoint> points);
std::string fig3_meta_json(const AnalysisConfig& cfg);
std::string summary_json(std::span<const TopicReport> rows, std::span<const CategoryDistribution> dists);

/// Writes every report file into `dir` (created if missing). Errors: Io.
void export_reports(std::span<const WindowAttribution> attributions, const AnalysisConfig& cfg,
                    const std::filesystem::path& dir);

/// Reads an attributions JSON-lines file.
std::vector<WindowAttribution> read_attributions(const std::filesystem::path& path);

}  // namespace plexitrace
