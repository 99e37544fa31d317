#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace dfkd::cli {

struct OrderStats {
  double median = 0.0;  // mean of the middle pair for even counts
  double min = 0.0;
  double max = 0.0;
};
OrderStats order_stats(std::vector<double> values);

struct ReportRow {
  std::string table;     // gan_fid, distill_accuracy, teacher_accuracy, detection_map, none
  std::string label;     // architecture or loss variant
  std::string dataset;
  std::size_t runs = 0;
  OrderStats measured;
  std::string reference;  // published value with its dataset, or "-"
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<std::string> absent;  // run dirs without a manifest, metrics or a reportable metric

  std::string csv() const;
  std::string text() const;
};

// Groups runs by subcommand and configuration (vanilla vs augmented GAN,
// distillation loss variant) and aggregates their final metrics across seeds.
Report build_report(const std::vector<std::filesystem::path>& run_dirs);

}  // namespace dfkd::cli
