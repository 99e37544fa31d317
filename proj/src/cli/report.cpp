#include "dfkd/cli/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "dfkd/cli/run_support.hpp"
#include "dfkd/core/error.hpp"
#include "dfkd/core/keyvalue.hpp"
#include "dfkd/core/log.hpp"

namespace dfkd::cli {

OrderStats order_stats(std::vector<double> values) {
  if (values.empty()) throw ContractError("order_stats: no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  const double median = n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return {median, values.front(), values.back()};
}

namespace {

const char* kDesk = "procedural (desk)";

struct Group {
  std::string table, label, reference;
  std::vector<double> values;
};

std::string gan_label(const RunManifest& m) {
  for (const auto& [name, kv] : m.config)
    if (name == "gan" && kv.get_double("lambda_attn", 0.0) != 0.0 && m.inputs.has("teacher"))
      return "GAN Augmented Transformer (lambda_attn=" + format_double(kv.get_double("lambda_attn")) + ")";
  return "GAN W/o Transformer";
}

std::string distill_label(const RunManifest& m) {
  for (const auto& [name, kv] : m.config)
    if (name == "distill")
      return "kd=" + format_double(kv.get_double("lambda_kd", 1.0)) + " ce=" +
             format_double(kv.get_double("lambda_ce", 1.0)) + " patch=" +
             format_double(kv.get_double("lambda_patch", 1.0)) + " T=" +
             format_double(kv.get_double("temperature", 4.0));
  return "distill";
}

std::string gan_reference(const std::string& label) {
  return label.rfind("GAN W/o", 0) == 0 ? "MNIST 27; CIFAR-10 76.94; CIFAR-100 83.27"
                                         : "MNIST 23; CIFAR-10 70.37; CIFAR-100 77.16";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

}  // namespace

Report build_report(const std::vector<std::filesystem::path>& run_dirs) {
  Report report;
  std::vector<std::string> order;
  std::map<std::string, Group> groups;
  const auto add = [&](const std::string& table, const std::string& label, const std::string& reference, double v) {
    const std::string key = table + "\n" + label;
    if (!groups.count(key)) {
      order.push_back(key);
      groups[key] = Group{table, label, reference, {}};
    }
    groups[key].values.push_back(v);
  };

  for (const auto& dir : run_dirs) {
    const auto manifest_path = dir / RunManifest::kFileName, metrics_path = dir / "metrics.csv";
    if (!std::filesystem::exists(manifest_path) || !std::filesystem::exists(metrics_path)) {
      report.absent.push_back(dir.string());
      continue;
    }
    RunManifest m;
    KeyValues metrics;
    try {
      m = RunManifest::from_file(ConfigFile::read(manifest_path.string()));
      metrics = read_metrics_csv(metrics_path.string());
    } catch (const Error& e) {
      log_warn("report: skipping " + dir.string() + ": " + e.what());
      report.absent.push_back(dir.string());
      continue;
    }
    const auto metric = [&](const char* key) { return metrics.get_double(key); };
    if (m.subcommand == "train-gan" && metrics.has("final_fid")) {
      const std::string label = gan_label(m);
      add("gan_fid", label, gan_reference(label), metric("final_fid"));
    } else if (m.subcommand == "distill" && metrics.has("student_test_acc")) {
      add("distill_accuracy", distill_label(m), "MNIST synthetic: student 96.73%, teacher 97.32%",
          metric("student_test_acc"));
    } else if (m.subcommand == "train-teacher" && metrics.has("test_acc")) {
      add("teacher_accuracy", "teacher ViT", "MNIST true data: teacher 98.75%", metric("test_acc"));
    } else if (m.subcommand == "train-detr-teacher" && metrics.has("train_map50")) {
      add("detection_map", "DETR teacher", "-", metric("train_map50"));
    } else if (m.subcommand == "distill-detect" && metrics.has("train_map50")) {
      add("detection_map", "DETR student", "-", metric("train_map50"));
    } else {
      report.absent.push_back(dir.string());
    }
  }

  for (const auto& key : order) {
    const Group& g = groups[key];
    report.rows.push_back({g.table, g.label, kDesk, g.values.size(), order_stats(g.values), g.reference});
  }
  if (report.rows.empty()) report.rows.push_back({"none", "no data", "-", 0, {}, "-"});
  return report;
}

std::string Report::csv() const {
  std::ostringstream os;
  os << "table,label,dataset,runs,measured_median,measured_min,measured_max,reference_published\n";
  for (const auto& r : rows) {
    os << r.table << ",\"" << r.label << "\"," << r.dataset << ',' << r.runs << ',';
    if (r.runs)
      os << csv_double(r.measured.median) << ',' << csv_double(r.measured.min) << ',' << csv_double(r.measured.max);
    else
      os << ",,";
    os << ",\"" << r.reference << "\"\n";
  }
  return os.str();
}

std::string Report::text() const {
  std::ostringstream os;
  std::string current;
  for (const auto& r : rows) {
    if (r.table != current) {
      current = r.table;
      os << "\n== " << r.table << " ==\n";
      os << "label | dataset | runs | measured (desk scale) median [min, max] | reference (published)\n";
    }
    os << r.label << " | " << r.dataset << " | " << r.runs << " | ";
    if (r.runs)
      os << fmt(r.measured.median) << " [" << fmt(r.measured.min) << ", " << fmt(r.measured.max) << "]";
    else
      os << "no data";
    os << " | " << r.reference << "\n";
  }
  if (!absent.empty()) {
    os << "\nskipped (no manifest, no metrics, or nothing reportable):\n";
    for (const auto& a : absent) os << "  " << a << "\n";
  }
  return os.str();
}

}  // namespace dfkd::cli
