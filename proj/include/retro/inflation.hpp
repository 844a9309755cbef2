#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "retro/eval.hpp"
#include "retro/stats.hpp"

namespace retro::inflation {

struct InflationRow {
  std::string model_id;
  stats::GapEstimate gap;
  bool significant = false; // fisher_p < 0.05
};

// Benchmark inflation of one model from its paired target/retro runs.
InflationRow compute_inflation(const eval::EvalSummary& target, const eval::EvalSummary& retro);

InflationRow make_row(const std::string& model_id, const stats::AccuracyEstimate& target,
                      const stats::AccuracyEstimate& retro);

enum class ReportFormat { json, csv, svg_scatter, svg_bars };

ReportFormat format_from_string(std::string_view name);

std::string render_report(const std::vector<InflationRow>& rows, ReportFormat format);

std::vector<InflationRow> rows_from_json(std::string_view text);
std::vector<InflationRow> rows_from_csv(std::string_view text);

} // namespace retro::inflation
