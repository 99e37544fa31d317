#include <unistd.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dfkd/cli/app.hpp"
#include "dfkd/cli/report.hpp"
#include "dfkd/cli/run_support.hpp"
#include "dfkd/core/error.hpp"
#include "dfkd/data/config_file.hpp"
#include "dfkd/data/image_set.hpp"

using namespace dfkd;
using namespace dfkd::cli;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code;
  std::string out, err;
};

Result run_cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

struct TempDir {
  fs::path path;
  TempDir() {
    static int n = 0;
    path = fs::temp_directory_path() / ("dfkd_cli_" + std::to_string(::getpid()) + "_" + std::to_string(n++));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  std::string operator/(const std::string& s) const { return (path / s).string(); }
};

void fake_run(const fs::path& dir, const std::string& subcommand, const std::vector<std::pair<std::string, KeyValues>>& config,
              const KeyValues& inputs, const std::vector<std::pair<std::string, double>>& metrics) {
  fs::create_directories(dir);
  RunManifest m;
  m.subcommand = subcommand;
  m.inputs = inputs;
  m.config = config;
  m.to_file().write((dir / RunManifest::kFileName).string());
  MetricsTable t;
  for (const auto& [k, v] : metrics) t.add(k, v);
  write_text(dir / "metrics.csv", t.csv());
}

}  // namespace

TEST_CASE("order statistics") {
  const OrderStats odd = order_stats({3.0, 1.0, 2.0});
  CHECK(odd.median == 2.0);
  CHECK(odd.min == 1.0);
  CHECK(odd.max == 3.0);
  const OrderStats even = order_stats({4.0, 1.0, 2.0, 10.0});
  CHECK(even.median == 3.0);
  CHECK(order_stats({5.0}).median == 5.0);
  CHECK_THROWS_AS(order_stats({}), ContractError);
}

TEST_CASE("usage errors exit 1 with usage text, help exits 0") {
  const Result bogus = run_cli({"gen-data", "--bogus", "--out", "x"});
  CHECK(bogus.code == 1);
  CHECK(bogus.err.find("Usage: gen-data") != std::string::npos);
  CHECK(run_cli({}).code == 1);
  CHECK(run_cli({"no-such-command"}).code == 1);
  CHECK(run_cli({"gen-data"}).code == 1);  // --out is required
  const Result help = run_cli({"--help"});
  CHECK(help.code == 0);
  for (const char* sub : {"gen-data", "train-teacher", "train-fid-extractor", "train-gan", "synthesize", "probe-export",
                          "distill", "train-detr-teacher", "distill-detect", "eval", "eval-detect", "fid", "report"})
    CHECK(help.out.find(sub) != std::string::npos);
  CHECK(run_cli({"distill", "--help"}).code == 0);
}

TEST_CASE("contract and IO errors map to exit codes") {
  TempDir tmp;
  const Result spec = run_cli({"gen-data", "--spec", "nope", "--out", tmp / "a"});
  CHECK(spec.code == 1);
  CHECK(spec.err.find("cls_default") != std::string::npos);
  const Result missing = run_cli({"train-teacher", "--data", tmp / "absent", "--out", tmp / "b"});
  CHECK(missing.code == 2);
  CHECK(missing.err.find("gen-data") != std::string::npos);
  CHECK(run_cli({"train-teacher", "--out", tmp / "c"}).code == 1);  // no --data
  CHECK(run_cli({"gen-data", "--config", tmp / "absent.cfg", "--out", tmp / "d"}).code == 2);

  setenv("DFKD_LOG", "loud", 1);
  CHECK(run_cli({"gen-data", "--out", tmp / "e"}).code == 1);
  setenv("DFKD_LOG", "error", 1);
}

TEST_CASE("output directory lock") {
  TempDir tmp;
  fs::create_directories(tmp.path / "run");
  write_text(tmp.path / "run" / OutDirLock::kFileName, "");
  const Result locked = run_cli({"gen-data", "--out", tmp / "run"});
  CHECK(locked.code == 2);
  CHECK(locked.err.find("in use") != std::string::npos);
  fs::remove(tmp.path / "run" / OutDirLock::kFileName);
  CHECK(run_cli({"gen-data", "--out", tmp / "run"}).code == 0);
  CHECK_FALSE(fs::exists(tmp.path / "run" / OutDirLock::kFileName));
  {
    OutDirLock a(tmp.path / "x");
    CHECK_THROWS_AS(OutDirLock(tmp.path / "x"), IoError);
  }
  CHECK_NOTHROW(OutDirLock(tmp.path / "x"));
}

TEST_CASE("gen-data is deterministic and reruns from its manifest") {
  setenv("DFKD_LOG", "error", 1);
  TempDir tmp;
  REQUIRE(run_cli({"gen-data", "--spec", "cls_default", "--seed", "7", "--out", tmp / "d1"}).code == 0);
  REQUIRE(run_cli({"gen-data", "--spec", "cls_default", "--seed", "7", "--out", tmp / "d2"}).code == 0);
  REQUIRE(run_cli({"gen-data", "--config", tmp / "d1/manifest.cfg", "--out", tmp / "d3"}).code == 0);
  for (const char* f : {"train.imgset", "val.imgset", "test.imgset", "metrics.csv", "preview.pgm"}) {
    CHECK(read_text(tmp.path / "d1" / f) == read_text(tmp.path / "d2" / f));
    CHECK(read_text(tmp.path / "d1" / f) == read_text(tmp.path / "d3" / f));
  }
  const RunManifest m = RunManifest::from_file(ConfigFile::read(tmp / "d1/manifest.cfg"));
  CHECK(m.subcommand == "gen-data");
  CHECK(m.seed == 7);
  CHECK(!m.version.empty());
  CHECK(m.inputs.get("spec") == "cls_default");
  CHECK(m.outputs.get("train") == "train.imgset");
  const StoredImageSet train = load_image_set(tmp / "d1/train.imgset");
  CHECK(train.images.size() == 420);

  // A manifest of another subcommand is rejected.
  CHECK(run_cli({"train-teacher", "--config", tmp / "d1/manifest.cfg", "--out", tmp / "t"}).code == 1);
}

TEST_CASE("config precedence: defaults < config file < flags") {
  setenv("DFKD_LOG", "error", 1);
  TempDir tmp;
  write_text(tmp.path / "gen.cfg", "[data]\nseed = 3\nsamples_per_class = 20\n");
  REQUIRE(run_cli({"gen-data", "--out", tmp / "def"}).code == 0);
  REQUIRE(run_cli({"gen-data", "--config", tmp / "gen.cfg", "--out", tmp / "cfg"}).code == 0);
  REQUIRE(run_cli({"gen-data", "--config", tmp / "gen.cfg", "--seed", "9", "--out", tmp / "flag"}).code == 0);
  const auto seed_of = [&](const char* d) {
    return RunManifest::from_file(ConfigFile::read(tmp / (std::string(d) + "/manifest.cfg"))).seed;
  };
  CHECK(seed_of("def") == 7);
  CHECK(seed_of("cfg") == 3);
  CHECK(seed_of("flag") == 9);
  const KeyValues metrics = read_metrics_csv(tmp / "cfg/metrics.csv");
  CHECK(metrics.get_double("train_count") == 42.0);

  write_text(tmp.path / "bad.cfg", "[data]\nnum_classes = 0\n");
  CHECK(run_cli({"gen-data", "--config", tmp / "bad.cfg", "--out", tmp / "bad"}).code == 1);
}

TEST_CASE("detection gen-data writes COCO splits") {
  setenv("DFKD_LOG", "error", 1);
  TempDir tmp;
  write_text(tmp.path / "det.cfg", "[detection_data]\nimages = 20\n");
  REQUIRE(run_cli({"gen-data", "--spec", "det_default", "--config", tmp / "det.cfg", "--out", tmp / "det"}).code == 0);
  for (const char* split : {"train", "val", "test"}) CHECK(fs::exists(tmp.path / "det" / split / "annotations.json"));
  CHECK_FALSE(fs::is_empty(tmp.path / "det/train/images"));
  const KeyValues metrics = read_metrics_csv(tmp / "det/metrics.csv");
  CHECK(metrics.get_double("train_count") == 14.0);
}

TEST_CASE("train-gan with lambda_attn and no teacher is a config error") {
  setenv("DFKD_LOG", "error", 1);
  TempDir tmp;
  REQUIRE(run_cli({"gen-data", "--out", tmp / "d"}).code == 0);
  const Result r = run_cli({"train-gan", "--data", tmp / "d", "--epochs", "1", "--out", tmp / "g"});
  CHECK(r.code == 1);
  CHECK(r.err.find("--teacher") != std::string::npos);
}

TEST_CASE("metrics CSV uses round-trip precision") {
  MetricsTable t;
  const double v = 0.1 + 0.2;
  t.add("x", v);
  t.add_text("name", "abc");
  CHECK(t.csv() == "metric,value\nx,0.30000000000000004\nname,abc\n");
  TempDir tmp;
  write_text(tmp.path / "m.csv", t.csv());
  const KeyValues back = read_metrics_csv(tmp / "m.csv");
  CHECK(back.get_double("x") == v);
  CHECK(back.get("name") == "abc");
}

TEST_CASE("run manifest round trip") {
  RunManifest m;
  m.subcommand = "distill";
  m.seed = 12;
  m.version = "abc123";
  m.started = "2024-01-01T00:00:00Z";
  m.finished = "2024-01-01T00:01:00Z";
  m.inputs.set("teacher", "t.ckpt");
  m.outputs.set("model", "student.ckpt");
  KeyValues d;
  d.set("lambda_kd", 0.5);
  m.config.emplace_back("distill", d);
  const RunManifest back = RunManifest::from_file(ConfigFile::parse(m.to_file().dump()));
  CHECK(back.subcommand == m.subcommand);
  CHECK(back.seed == 12);
  CHECK(back.version == m.version);
  CHECK(back.started == m.started);
  CHECK(back.finished == m.finished);
  CHECK(back.inputs == m.inputs);
  CHECK(back.outputs == m.outputs);
  REQUIRE(back.config.size() == 1);
  CHECK(back.config[0].first == "distill");
  CHECK(back.config[0].second == d);
}

TEST_CASE("report aggregates seeds and labels GAN variants") {
  TempDir tmp;
  KeyValues vanilla, augmented, teacher_input, distill_cfg;
  vanilla.set("lambda_attn", 0.0);
  augmented.set("lambda_attn", 1.0);
  teacher_input.set("teacher", "t.ckpt");
  distill_cfg.set("lambda_kd", 1.0);
  distill_cfg.set("lambda_ce", 0.0);
  distill_cfg.set("lambda_patch", 1.0);
  distill_cfg.set("temperature", 4.0);
  const std::vector<double> fv{10.0, 14.0, 12.0}, fa{9.0, 8.0, 20.0};
  std::vector<fs::path> dirs;
  for (std::size_t i = 0; i < 3; ++i) {
    dirs.push_back(tmp.path / ("v" + std::to_string(i)));
    fake_run(dirs.back(), "train-gan", {{"gan", vanilla}}, {}, {{"final_fid", fv[i]}});
    dirs.push_back(tmp.path / ("a" + std::to_string(i)));
    fake_run(dirs.back(), "train-gan", {{"gan", augmented}}, teacher_input, {{"final_fid", fa[i]}});
  }
  dirs.push_back(tmp.path / "s");
  fake_run(dirs.back(), "distill", {{"distill", distill_cfg}}, teacher_input, {{"student_test_acc", 0.8}});
  dirs.push_back(tmp.path / "missing");

  const Report r = build_report(dirs);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].label == "GAN W/o Transformer");
  CHECK(r.rows[0].runs == 3);
  CHECK(r.rows[0].measured.median == 12.0);
  CHECK(r.rows[0].measured.min == 10.0);
  CHECK(r.rows[0].measured.max == 14.0);
  CHECK(r.rows[0].reference.find("27") != std::string::npos);
  CHECK(r.rows[1].label == "GAN Augmented Transformer (lambda_attn=1)");
  CHECK(r.rows[1].measured.median == 9.0);
  CHECK(r.rows[1].reference.find("70.37") != std::string::npos);
  CHECK(r.rows[2].label == "kd=1 ce=0 patch=1 T=4");
  CHECK(r.absent == std::vector<std::string>{(tmp.path / "missing").string()});
  const std::string text = r.text();
  CHECK(text.find("measured (desk scale)") != std::string::npos);
  CHECK(text.find("reference (published)") != std::string::npos);
  CHECK(r.csv().rfind("table,label,dataset,runs,measured_median,measured_min,measured_max,reference_published\n", 0) == 0);
}

TEST_CASE("report on an empty directory prints a no-data row and exits 0") {
  setenv("DFKD_LOG", "error", 1);
  TempDir tmp;
  fs::create_directories(tmp.path / "empty");
  const Report r = build_report({tmp.path / "empty"});
  REQUIRE(r.rows.size() == 1);
  CHECK(r.rows[0].label == "no data");
  CHECK(r.rows[0].runs == 0);
  const fs::path before = fs::current_path();
  fs::current_path(tmp.path);
  const Result res = run_cli({"report", "--runs", tmp / "empty"});
  CHECK_FALSE(fs::exists(tmp.path / "report.csv"));
  fs::current_path(before);
  CHECK(res.code == 0);
  CHECK(res.out.find("no data") != std::string::npos);
  const Result with_out = run_cli({"report", "--runs", tmp / "empty", "--out", tmp / "rep"});
  CHECK(with_out.code == 0);
  CHECK(fs::exists(tmp.path / "rep/report.csv"));
}
