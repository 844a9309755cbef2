#include "retro/inflation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "retro/csv.hpp"
#include "retro/error.hpp"

namespace retro::inflation {

using nlohmann::json;

InflationRow compute_inflation(const eval::EvalSummary& target, const eval::EvalSummary& retro) {
  if (target.model_id != retro.model_id)
    raise(ErrorKind::mismatch, "inflation: summaries from different models (" + target.model_id +
                                   " vs " + retro.model_id + ")");
  if (target.variant_fingerprint != retro.variant_fingerprint)
    raise(ErrorKind::mismatch, "inflation: summaries use different prompt variants (" +
                                   target.variant_fingerprint + " vs " + retro.variant_fingerprint +
                                   ")");
  return make_row(target.model_id, target.accuracy, retro.accuracy);
}

InflationRow make_row(const std::string& model_id, const stats::AccuracyEstimate& target,
                      const stats::AccuracyEstimate& retro) {
  InflationRow row;
  row.model_id = model_id;
  row.gap = stats::make_gap_estimate(target, retro);
  row.significant = row.gap.fisher_p < 0.05;
  return row;
}

ReportFormat format_from_string(std::string_view name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "svg_scatter") return ReportFormat::svg_scatter;
  if (name == "svg_bars") return ReportFormat::svg_bars;
  raise(ErrorKind::unsupported, "unknown report format: " + std::string(name));
}

namespace {

std::string fmt(double v, const char* spec = "%.6f") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string render_json(const std::vector<InflationRow>& rows) {
  json j = json::array();
  for (const auto& r : rows) {
    j.push_back({{"model_id", r.model_id},
                 {"correct_target", r.gap.acc_target.correct},
                 {"total_target", r.gap.acc_target.total},
                 {"correct_retro", r.gap.acc_retro.correct},
                 {"total_retro", r.gap.acc_retro.total},
                 {"acc_target", r.gap.acc_target.acc()},
                 {"sigma_target", r.gap.acc_target.sigma()},
                 {"acc_retro", r.gap.acc_retro.acc()},
                 {"sigma_retro", r.gap.acc_retro.sigma()},
                 {"gap_pp", r.gap.gap_pp},
                 {"u_p", r.gap.u_p},
                 {"u_h", r.gap.u_h},
                 {"bound_99", r.gap.bound_99},
                 {"fisher_p", r.gap.fisher_p},
                 {"significant", r.significant}});
  }
  return j.dump(2) + "\n";
}

std::string render_csv(const std::vector<InflationRow>& rows) {
  // The count columns after the named ones keep json -> csv -> json lossless.
  std::string out =
      "model_id,acc_target,sigma_target,acc_retro,sigma_retro,gap_pp,fisher_p,significant,"
      "correct_target,total_target,correct_retro,total_retro\n";
  for (const auto& r : rows) {
    out += csv::format_row({r.model_id, fmt(r.gap.acc_target.acc(), "%.17g"),
                            fmt(r.gap.acc_target.sigma(), "%.17g"), fmt(r.gap.acc_retro.acc(), "%.17g"),
                            fmt(r.gap.acc_retro.sigma(), "%.17g"), fmt(r.gap.gap_pp, "%.17g"),
                            fmt(r.gap.fisher_p, "%.17g"), r.significant ? "true" : "false",
                            std::to_string(r.gap.acc_target.correct),
                            std::to_string(r.gap.acc_target.total),
                            std::to_string(r.gap.acc_retro.correct),
                            std::to_string(r.gap.acc_retro.total)});
  }
  return out;
}

// Plot frame shared by both SVG renderings.
constexpr int kWidth = 720;
constexpr int kHeight = 520;
constexpr int kMarginLeft = 170;
constexpr int kMarginRight = 40;
constexpr int kMarginTop = 30;
constexpr int kMarginBottom = 50;

std::string svg_header() {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kWidth << "\" height=\"" << kHeight
    << "\" viewBox=\"0 0 " << kWidth << " " << kHeight << "\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  return s.str();
}

std::string render_svg_scatter(const std::vector<InflationRow>& rows) {
  // Target accuracy on x, retro accuracy on y; points under the diagonal
  // score lower on the holdout than on the public set.
  const double x0 = 100, y0 = kHeight - kMarginBottom, x1 = kWidth - kMarginRight, y1 = kMarginTop;
  auto sx = [&](double acc) { return x0 + acc * (x1 - x0); };
  auto sy = [&](double acc) { return y0 + acc * (y1 - y0); };

  std::ostringstream s;
  s << svg_header();
  s << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(x1) << "\" y2=\""
    << fmt(y0) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << fmt(x0) << "\" y1=\"" << fmt(y0) << "\" x2=\"" << fmt(x0) << "\" y2=\""
    << fmt(y1) << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << fmt(sx(0)) << "\" y1=\"" << fmt(sy(0)) << "\" x2=\"" << fmt(sx(1))
    << "\" y2=\"" << fmt(sy(1)) << "\" stroke=\"#888\" stroke-dasharray=\"6,4\"/>\n";
  s << "<text x=\"" << fmt((x0 + x1) / 2) << "\" y=\"" << fmt(y0 + 36.0)
    << "\" text-anchor=\"middle\" font-size=\"13\">accuracy on target</text>\n";
  s << "<text x=\"24\" y=\"" << fmt((y0 + y1) / 2)
    << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 24 "
    << fmt((y0 + y1) / 2) << ")\">accuracy on retro</text>\n";
  for (const auto& r : rows) {
    double xa = r.gap.acc_target.acc(), ya = r.gap.acc_retro.acc();
    double xs = r.gap.acc_target.sigma(), ys = r.gap.acc_retro.sigma();
    s << "<line x1=\"" << fmt(sx(xa - xs)) << "\" y1=\"" << fmt(sy(ya)) << "\" x2=\""
      << fmt(sx(xa + xs)) << "\" y2=\"" << fmt(sy(ya)) << "\" stroke=\"#4477aa\"/>\n";
    s << "<line x1=\"" << fmt(sx(xa)) << "\" y1=\"" << fmt(sy(ya - ys)) << "\" x2=\""
      << fmt(sx(xa)) << "\" y2=\"" << fmt(sy(ya + ys)) << "\" stroke=\"#4477aa\"/>\n";
    s << "<circle cx=\"" << fmt(sx(xa)) << "\" cy=\"" << fmt(sy(ya))
      << "\" r=\"4\" fill=\"#4477aa\"/>\n";
    s << "<text x=\"" << fmt(sx(xa) + 6.0) << "\" y=\"" << fmt(sy(ya) - 6.0)
      << "\" font-size=\"11\">" << r.model_id << (r.significant ? " *" : "") << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

std::string render_svg_bars(const std::vector<InflationRow>& rows) {
  double max_abs = 1.0;
  for (const auto& r : rows) max_abs = std::max(max_abs, std::fabs(r.gap.gap_pp));
  max_abs *= 1.15;
  const double x_zero = kMarginLeft + (kWidth - kMarginLeft - kMarginRight) / 2.0;
  const double x_scale = (kWidth - kMarginLeft - kMarginRight) / (2.0 * max_abs);
  const double row_h =
      (kHeight - kMarginTop - kMarginBottom) / std::max<std::size_t>(1, rows.size());

  std::ostringstream s;
  s << svg_header();
  s << "<line x1=\"" << fmt(x_zero) << "\" y1=\"" << fmt(static_cast<double>(kMarginTop))
    << "\" x2=\"" << fmt(x_zero) << "\" y2=\"" << fmt(static_cast<double>(kHeight - kMarginBottom))
    << "\" stroke=\"black\"/>\n";
  s << "<text x=\"" << fmt(x_zero) << "\" y=\"" << fmt(static_cast<double>(kHeight - 18))
    << "\" text-anchor=\"middle\" font-size=\"13\">benchmark inflation (pp)</text>\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    double y = kMarginTop + row_h * static_cast<double>(i) + row_h * 0.2;
    double h = row_h * 0.6;
    double w = r.gap.gap_pp * x_scale;
    double bx = w >= 0 ? x_zero : x_zero + w;
    s << "<rect x=\"" << fmt(bx) << "\" y=\"" << fmt(y) << "\" width=\"" << fmt(std::fabs(w))
      << "\" height=\"" << fmt(h) << "\" fill=\"" << (r.gap.gap_pp >= 0 ? "#cc6677" : "#44aa77")
      << "\"/>\n";
    // 1-sigma whisker on the gap.
    double sig_w = (r.gap.acc_target.sigma() + r.gap.acc_retro.sigma()) * 100.0 * x_scale;
    double cx = x_zero + w;
    s << "<line x1=\"" << fmt(cx - sig_w) << "\" y1=\"" << fmt(y + h / 2) << "\" x2=\""
      << fmt(cx + sig_w) << "\" y2=\"" << fmt(y + h / 2) << "\" stroke=\"black\"/>\n";
    s << "<text x=\"8\" y=\"" << fmt(y + h * 0.75) << "\" font-size=\"11\">" << r.model_id
      << (r.significant ? " *" : "") << "</text>\n";
    s << "<text x=\"" << fmt(static_cast<double>(kWidth - kMarginRight + 4)) << "\" y=\""
      << fmt(y + h * 0.75) << "\" font-size=\"10\" text-anchor=\"end\">p="
      << fmt(r.gap.fisher_p, "%.3g") << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

} // namespace

std::string render_report(const std::vector<InflationRow>& rows, ReportFormat format) {
  if (rows.empty()) raise(ErrorKind::validation, "inflation report needs at least one row");
  switch (format) {
    case ReportFormat::json: return render_json(rows);
    case ReportFormat::csv: return render_csv(rows);
    case ReportFormat::svg_scatter: return render_svg_scatter(rows);
    case ReportFormat::svg_bars: return render_svg_bars(rows);
  }
  raise(ErrorKind::unsupported, "unknown report format");
}

std::vector<InflationRow> rows_from_json(std::string_view text) {
  json j = json::parse(text);
  std::vector<InflationRow> rows;
  for (const auto& item : j) {
    rows.push_back(make_row(
        item.at("model_id").get<std::string>(),
        stats::make_accuracy(item.at("correct_target").get<long>(),
                             item.at("total_target").get<long>()),
        stats::make_accuracy(item.at("correct_retro").get<long>(),
                             item.at("total_retro").get<long>())));
  }
  return rows;
}

std::vector<InflationRow> rows_from_csv(std::string_view text) {
  auto parsed = csv::parse(text);
  if (parsed.size() < 2) raise(ErrorKind::parse, "inflation CSV has no data rows");
  const auto& header = parsed.front();
  auto col = [&](std::string_view want) -> std::size_t {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == want) return i;
    raise(ErrorKind::parse, "inflation CSV missing column " + std::string(want));
  };
  std::size_t c_model = col("model_id");
  std::size_t c_ct = col("correct_target"), c_tt = col("total_target");
  std::size_t c_cr = col("correct_retro"), c_tr = col("total_retro");
  std::vector<InflationRow> rows;
  for (std::size_t r = 1; r < parsed.size(); ++r) {
    const auto& row = parsed[r];
    rows.push_back(make_row(row.at(c_model),
                            stats::make_accuracy(std::stol(row.at(c_ct)), std::stol(row.at(c_tt))),
                            stats::make_accuracy(std::stol(row.at(c_cr)), std::stol(row.at(c_tr)))));
  }
  return rows;
}

} // namespace retro::inflation
