#pragma once

#include <map>
#include <string>
#include <vector>

#include "aerossl/eval.hpp"

namespace aerossl {

/// Numeric columns of a metrics.csv; empty cells are NaN.
struct MetricsLog {
  std::vector<std::string> columns;
  std::map<std::string, std::vector<double>> values;

  bool has(const std::string& column) const { return values.count(column) > 0; }
};

MetricsLog read_metrics_csv(const std::string& path);

struct CurveSeries {
  std::string name;
  std::vector<double> x, y;
};

/// Series of `column` against step for each run, skipping NaN cells.
std::vector<CurveSeries> curves_from_logs(const std::vector<std::pair<std::string, MetricsLog>>& runs,
                                          const std::string& column);

/// Line chart with one polyline per series and a legend.
std::string render_curves_svg(const std::vector<CurveSeries>& series, const std::string& title,
                              const std::string& y_label);

/// Results table with the Acc / Prec / Rec schema.
void write_results_table(const std::string& path, const std::vector<ResultRow>& rows);

}  // namespace aerossl
