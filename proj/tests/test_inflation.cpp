#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "retro/error.hpp"
#include "retro/inflation.hpp"

using namespace retro;

namespace {

eval::EvalSummary summary_of(const std::string& model, long correct, long total,
                             const std::string& variant = "standard") {
  eval::EvalSummary s;
  s.model_id = model;
  s.dataset_name = "ds";
  s.variant_fingerprint = variant;
  s.accuracy = stats::make_accuracy(correct, total);
  return s;
}

} // namespace

TEST_CASE("equal accuracies yield zero gap and no significance") {
  auto row = inflation::compute_inflation(summary_of("m", 50, 100), summary_of("m", 50, 100));
  CHECK(row.gap.gap_pp == doctest::Approx(0.0));
  CHECK(row.gap.fisher_p == doctest::Approx(1.0));
  CHECK_FALSE(row.significant);
}

TEST_CASE("benchmark inflation arithmetic reproduces the published gaps") {
  // 60.0% vs 46.9% -> 13.1 pp; 71.1% vs 60.0% -> 11.1 pp; 55.0% vs 46.5% -> 8.5 pp.
  auto chatgpt = inflation::make_row("gpt-3.5", stats::make_accuracy(600, 1000),
                                     stats::make_accuracy(469, 1000));
  CHECK(chatgpt.gap.gap_pp == doctest::Approx(13.1).epsilon(1e-9));
  auto gpt4 = inflation::make_row("gpt-4", stats::make_accuracy(711, 1000),
                                  stats::make_accuracy(600, 1000));
  CHECK(gpt4.gap.gap_pp == doctest::Approx(11.1).epsilon(1e-9));
  auto mistral = inflation::make_row("mistral-7b", stats::make_accuracy(550, 1000),
                                     stats::make_accuracy(465, 1000));
  CHECK(mistral.gap.gap_pp == doctest::Approx(8.5).epsilon(1e-9));
}

TEST_CASE("fisher significance matches the hypergeometric oracle") {
  auto row = inflation::make_row("m", stats::make_accuracy(90, 100), stats::make_accuracy(60, 100));
  CHECK(row.gap.fisher_p ==
        doctest::Approx(oracles::fisher_two_sided_exact(90, 10, 60, 40)).epsilon(1e-9));
  CHECK(row.significant);
}

TEST_CASE("gap is antisymmetric and the 99% bound composes additively") {
  auto a = inflation::make_row("m", stats::make_accuracy(70, 120), stats::make_accuracy(50, 110));
  auto b = inflation::make_row("m", stats::make_accuracy(50, 110), stats::make_accuracy(70, 120));
  CHECK(a.gap.gap_pp == doctest::Approx(-b.gap.gap_pp).epsilon(1e-12));
  CHECK(a.gap.bound_99 == a.gap.u_p + a.gap.u_h);
  CHECK(a.gap.u_p == doctest::Approx(b.gap.u_h).epsilon(1e-12));
}

TEST_CASE("mismatched model or variant is an error") {
  CHECK_THROWS_AS(inflation::compute_inflation(summary_of("a", 1, 2), summary_of("b", 1, 2)),
                  Error);
  CHECK_THROWS_AS(inflation::compute_inflation(summary_of("a", 1, 2, "standard"),
                                               summary_of("a", 1, 2, "top_k:k=2")),
                  Error);
}

TEST_CASE("json -> csv -> json round-trip is lossless") {
  std::vector<inflation::InflationRow> rows = {
      inflation::make_row("model-one", stats::make_accuracy(60, 100), stats::make_accuracy(47, 100)),
      inflation::make_row("model, two", stats::make_accuracy(90, 150), stats::make_accuracy(88, 140)),
  };
  auto json_a = inflation::render_report(rows, inflation::ReportFormat::json);
  auto csv_text = inflation::render_report(inflation::rows_from_json(json_a),
                                           inflation::ReportFormat::csv);
  auto rows_back = inflation::rows_from_csv(csv_text);
  auto json_b = inflation::render_report(rows_back, inflation::ReportFormat::json);
  CHECK(json_a == json_b);
}

TEST_CASE("svg renderings carry one mark per row and stars on significant rows") {
  std::vector<inflation::InflationRow> rows;
  int expected_stars = 0;
  for (int i = 0; i < 20; ++i) {
    long correct_retro = 50 - i; // growing gap: later rows become significant
    rows.push_back(inflation::make_row("model-" + std::to_string(i),
                                       stats::make_accuracy(60, 100),
                                       stats::make_accuracy(correct_retro, 100)));
    if (rows.back().significant) ++expected_stars;
  }
  CHECK(expected_stars > 0);
  CHECK(expected_stars < 20);

  auto scatter = inflation::render_report(rows, inflation::ReportFormat::svg_scatter);
  std::size_t circles = 0, pos = 0;
  while ((pos = scatter.find("<circle", pos)) != std::string::npos) {
    ++circles;
    pos += 7;
  }
  CHECK(circles == 20);
  CHECK(scatter.find("stroke-dasharray") != std::string::npos); // the diagonal

  auto bars = inflation::render_report(rows, inflation::ReportFormat::svg_bars);
  std::size_t stars = 0;
  pos = 0;
  while ((pos = bars.find(" *", pos)) != std::string::npos) {
    ++stars;
    pos += 2;
  }
  CHECK(stars == static_cast<std::size_t>(expected_stars));

  // Single-row rendering stays valid.
  std::vector<inflation::InflationRow> one = {rows[0]};
  auto single = inflation::render_report(one, inflation::ReportFormat::svg_scatter);
  CHECK(single.find("<svg") != std::string::npos);
  CHECK(single.find("</svg>") != std::string::npos);

  CHECK_THROWS_AS(inflation::render_report({}, inflation::ReportFormat::json), Error);
}
