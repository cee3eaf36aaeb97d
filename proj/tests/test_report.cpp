#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>

#include "doctest.h"
#include "plexitrace/report.hpp"
#include "test_support.hpp"

using namespace plexitrace;
using plexitrace::testing::error_of;
using plexitrace::testing::read_text;
using plexitrace::testing::TempDir;

namespace {

WindowAttribution attr(std::string topic, std::string record, std::size_t span_start, std::size_t span_len,
                       std::size_t offset, std::uint64_t c, bool rep = false, double ppl = 1.0) {
  WindowAttribution a;
  a.window.record_id = std::move(record);
  a.window.topic = std::move(topic);
  a.window.span_start = span_start;
  a.window.span_len = span_len;
  a.window.offset = offset;
  a.window.tokens = {1, 2, 3, 4, 5, 6};
  a.window.is_prompt_repetition = rep;
  a.match.count = c;
  a.category = categorize(c, AnalysisConfig{});
  a.log2_standalone_ppl = ppl;
  return a;
}

std::vector<WindowAttribution> random_attributions(std::mt19937_64& rng, std::size_t n) {
  std::vector<WindowAttribution> out;
  const char* topics[] = {"genetics", "nuclear physics", "law, \"civil\""};
  for (std::size_t i = 0; i < n; ++i) {
    const std::string topic = topics[rng() % 3];
    const std::string rec = topic + "/" + std::to_string(rng() % 4) + "/0";
    const std::uint64_t c = rng() % 3 == 0 ? 0 : rng() % 120;
    out.push_back(attr(topic, rec, 0, 6, 0, c, rng() % 5 == 0, static_cast<double>(rng() % 1000) / 100.0));
  }
  // one span per record in this generator: make span_len agree across windows of a record
  std::map<std::string, std::size_t> per_record;
  for (auto& a : out) a.window.offset = per_record[a.window.record_id]++;
  for (auto& a : out) a.window.span_len = per_record[a.window.record_id] + 5;
  return out;
}

}  // namespace

TEST_SUITE("report") {
  TEST_CASE("aggregate counts by hand") {
    const std::vector<WindowAttribution> attrs{attr("g", "g/0/0", 0, 8, 0, 0, false), attr("g", "g/0/0", 0, 8, 1, 2, true),
                                               attr("g", "g/0/0", 0, 8, 2, 7, false)};
    const auto spans = spans_from_attributions(attrs);
    REQUIRE(spans.size() == 1);
    const auto rows = aggregate(attrs, spans);
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].n_windows == 3);
    CHECK(rows[0].n_match == 2);
    CHECK(*rows[0].match_ratio == doctest::Approx(2.0 / 3.0));
    CHECK(rows[0].n_rep == 1);
    CHECK(rows[0].n_spans == 1);
    CHECK(rows[0].span_mean == 8.0);
    CHECK(*rows[0].mean_log2_standalone_ppl == 1.0);
  }

  TEST_CASE("empty group has null ratios") {
    const auto total = aggregate_total({}, {});
    CHECK(total.topic == kTotalRow);
    CHECK(total.n_windows == 0);
    CHECK(!total.match_ratio.has_value());
    CHECK(!total.rep_ratio.has_value());
    CHECK(format_percent(total.match_ratio).empty());
    CHECK(aggregate({}, {}).empty());
  }

  TEST_CASE("inconsistent streams") {
    const std::vector<WindowAttribution> attrs{attr("g", "g/0/0", 0, 6, 0, 1)};
    const std::vector<SpanSummary> wrong{{"g/0/0", "g", 3, 6}};
    CHECK(error_of([&] { aggregate(attrs, wrong); }) == ErrorCode::kInconsistentStreams);
    const std::vector<SpanSummary> other_topic{{"g/0/0", "h", 0, 6}};
    CHECK(error_of([&] { aggregate(attrs, other_topic); }) == ErrorCode::kInconsistentStreams);
  }

  TEST_CASE("category distribution by hand") {
    const std::vector<WindowAttribution> attrs{attr("t", "r", 0, 9, 0, 0), attr("t", "r", 0, 9, 1, 0),
                                               attr("t", "r", 0, 9, 2, 3), attr("t", "r", 0, 9, 3, 10)};
    const auto d = category_distribution(attrs);
    REQUIRE(d.size() == 1);
    CHECK(d[0].shares == std::array<double, 4>{0.5, 0.25, 0.25, 0.0});
    const std::vector<WindowAttribution> sth{attr("t", "r", 0, 7, 0, 0), attr("t", "r", 0, 7, 1, 0)};
    CHECK(category_distribution(sth)[0].shares == std::array<double, 4>{1.0, 0.0, 0.0, 0.0});
  }

  TEST_CASE("report invariants on random inputs") {
    std::mt19937_64 rng(31);
    for (int round = 0; round < 100; ++round) {
      const auto attrs = random_attributions(rng, 1 + rng() % 200);
      const auto spans = spans_from_attributions(attrs);
      const auto rows = aggregate(attrs, spans);
      const auto dists = category_distribution(attrs);
      REQUIRE(rows.size() == dists.size());
      std::uint64_t n_sum = 0;
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        const auto& d = dists[i];
        CHECK(r.topic == d.topic);
        CHECK(r.n_match <= r.n_windows);
        CHECK(r.n_rep <= r.n_windows);
        CHECK(r.n_windows == std::accumulate(d.counts.begin(), d.counts.end(), std::uint64_t{0}));
        CHECK(r.n_match == r.n_windows - d.counts[0]);
        CHECK(std::abs(d.shares[0] + d.shares[1] + d.shares[2] + d.shares[3] - 1.0) <= 1e-9);
        CHECK(*r.match_ratio >= 0.0);
        CHECK(*r.match_ratio <= 1.0);
        n_sum += r.n_windows;
      }
      CHECK(aggregate_total(attrs, spans).n_windows == n_sum);
      for (const auto& b : boxplot_data(attrs)) {
        CHECK(b.min <= b.q1);
        CHECK(b.q1 <= b.median);
        CHECK(b.median <= b.q3);
        CHECK(b.q3 <= b.max);
      }
      const auto points = scatter_data(attrs);
      CHECK(points.size() == attrs.size());
      for (std::size_t i = 0; i < points.size(); ++i) {
        CHECK(points[i].category == categorize(points[i].c, AnalysisConfig{}));
        if (i > 0) {
          CHECK(std::tie(points[i - 1].record_id, points[i - 1].position) <=
                std::tie(points[i].record_id, points[i].position));
        }
      }
    }
  }

  TEST_CASE("boxplot statistics") {
    auto with_counts = [](std::vector<std::uint64_t> cs) {
      std::vector<WindowAttribution> out;
      for (std::size_t i = 0; i < cs.size(); ++i) out.push_back(attr("t", "r", 0, 6 + cs.size(), i, cs[i]));
      return out;
    };
    auto b = boxplot_data(with_counts({5, 1, 0, 4, 2, 3}));
    REQUIRE(b.size() == 1);
    CHECK(b[0].n == 5);
    CHECK(b[0].median == 3.0);
    CHECK(b[0].q1 == 2.0);
    CHECK(b[0].q3 == 4.0);
    CHECK(b[0].min == 1.0);
    CHECK(b[0].max == 5.0);
    CHECK(b[0].outliers.empty());

    b = boxplot_data(with_counts({7}));
    CHECK(b[0].min == 7.0);
    CHECK(b[0].q1 == 7.0);
    CHECK(b[0].median == 7.0);
    CHECK(b[0].q3 == 7.0);
    CHECK(b[0].max == 7.0);

    b = boxplot_data(with_counts({1, 1, 1, 100}));
    CHECK(b[0].outliers == std::vector<double>{100.0});
    CHECK(boxplot_data(with_counts({0, 0})).empty());

    const std::vector<double> even{1, 2, 3, 4};
    CHECK(quantile_sorted(even, 0.5) == 2.5);
    CHECK(quantile_sorted(even, 0.25) == 1.75);
  }

  TEST_CASE("percent formatting and CSV quoting") {
    CHECK(format_percent(0.38) == "38%");
    CHECK(format_percent(0.079) == "7.9%");
    CHECK(format_percent(0.081) == "8.1%");
    CHECK(format_percent(2.0 / 3.0) == "67%");
    CHECK(format_percent(1.0) == "100%");
    CHECK(format_percent(0.0) == "0%");
    CHECK(format_percent(0.36) == "36%");
    CHECK(format_percent(0.005) == "0.50%");
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(csv_field("two\nlines") == "\"two\nlines\"");
  }

  TEST_CASE("table 2 rows") {
    std::vector<WindowAttribution> attrs;
    for (int i = 0; i < 3; ++i) attrs.push_back(attr("Genetics", "Genetics/0/0", 0, 8, i, i == 0 ? 0 : 3, i == 1));
    attrs.push_back(attr("Law, civil", "Law, civil/1/0", 2, 6, 0, 0));
    auto rows = aggregate(attrs, spans_from_attributions(attrs));
    rows.push_back(aggregate_total(attrs, spans_from_attributions(attrs)));
    CHECK(table2_csv(rows) ==
          "Topic,N,N_{c>0},N_{c>0}/N,N_rep/N\n"
          "Genetics,3,2,67%,33%\n"
          "\"Law, civil\",1,0,0%,0%\n"
          "Total,4,2,50%,25%\n");
    CHECK(table2_csv({}) == "Topic,N,N_{c>0},N_{c>0}/N,N_rep/N\n");
    CHECK(table1_csv(rows) ==
          "Topic,L_mean,L_std,spans\n"
          "Genetics,8.00,0.00,1\n"
          "\"Law, civil\",6.00,0.00,1\n"
          "Total,7.00,1.00,2\n");
    CHECK(table4_csv(category_distribution(attrs)) ==
          "Topic,STH,MEM,SEG,FET\n"
          "Genetics,33%,67%,0%,0%\n"
          "\"Law, civil\",100%,0%,0%,0%\n");
  }

  TEST_CASE("exports are complete and byte-deterministic") {
    std::mt19937_64 rng(8);
    const auto attrs = random_attributions(rng, 150);
    TempDir a, b;
    export_reports(attrs, AnalysisConfig{}, a.path());
    export_reports(attrs, AnalysisConfig{}, b.path());
    for (const char* name : {"table1_spans.csv", "table2_matches.csv", "table4_categories.csv", "fig2_boxplot.json",
                             "fig3_scatter.csv", "fig3_scatter_meta.json", "summary.json"}) {
      REQUIRE(std::filesystem::exists(a / name));
      CHECK(read_text(a / name) == read_text(b / name));
    }
    const auto meta = read_text(a / "fig3_scatter_meta.json");
    CHECK(meta.find("\"seg_lower\": 5") != std::string::npos);
    CHECK(meta.find("\"fet_lower\": 50") != std::string::npos);

    TempDir empty;
    export_reports({}, AnalysisConfig{}, empty.path());
    CHECK(read_text(empty / "fig3_scatter.csv") == "record_id,topic,position,c,log2_standalone_ppl,category\n");
    CHECK(read_text(empty / "table4_categories.csv") == "Topic,STH,MEM,SEG,FET\n");
  }

  TEST_CASE("attributions file round trip through the report") {
    std::mt19937_64 rng(10);
    const auto attrs = random_attributions(rng, 40);
    TempDir dir;
    {
      std::ofstream out(dir / "attributions.jsonl");
      for (const auto& a : attrs) out << attribution_to_jsonl(a) << "\n";
    }
    const auto back = read_attributions(dir / "attributions.jsonl");
    REQUIRE(back.size() == attrs.size());
    TempDir x, y;
    export_reports(attrs, AnalysisConfig{}, x.path());
    export_reports(back, AnalysisConfig{}, y.path());
    CHECK(read_text(x / "table2_matches.csv") == read_text(y / "table2_matches.csv"));
    CHECK(read_text(x / "fig3_scatter.csv") == read_text(y / "fig3_scatter.csv"));
  }
}
