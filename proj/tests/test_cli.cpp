#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"

using mantra::run_cli;
namespace fs = std::filesystem;

namespace {

const fs::path& root() {
  static const fs::path dir = [] {
    const fs::path d = fs::temp_directory_path() / "mantra_test_cli";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

struct Run {
  int code;
  std::string out, err;
};

Run run(std::vector<std::string> args) {
  args.insert(args.begin(), "mantra");
  std::vector<const char*> argv;
  for (const std::string& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string write(const std::string& name, const std::string& content) {
  const fs::path p = root() / name;
  std::ofstream(p) << content;
  return p.string();
}

std::size_t line_count(const fs::path& p) {
  const std::string s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

std::string out_dir(const std::string& name) { return (root() / name).string(); }

const char* kTinyConfig = R"({
  "data": {"synth": {"length": 300, "seed": 1, "script": {"segments": [{"length": 300, "frequency": 0.05,
    "amplitude": 1.0, "trend_slope": 0.0005, "noise_std": 0.1}]}}, "split": [0.6, 0.2, 0.2], "input_len": 8, "pred_len": 4},
  "model": {"d_model": 8, "d_ff": 16, "enc_layers": 1, "dec_layers": 1, "heads": 2, "kernel": 5},
  "ensemble": {"learners": 2, "seed": 1},
  "urt": {"key_dim": 4},
  "train": {"epochs": 1, "urt_epochs": 1, "adapt_epochs": 2, "batch_size": 16, "seed": 1}
})";

const char* kScript = R"({"kind": "abrupt", "segments": [
  {"length": 200, "frequency": 0.05, "amplitude": 1.0, "noise_std": 0.1},
  {"length": 100, "frequency": 0.15, "amplitude": 1.0, "noise_std": 0.1}]})";

}  // namespace

TEST_CASE("usage errors") {
  CHECK(run({}).code == mantra::kExitUsage);
  CHECK(run({"frobnicate"}).code == mantra::kExitUsage);
  CHECK(run({"train"}).code == mantra::kExitUsage);
  CHECK(run({"--help"}).code == mantra::kExitOk);
}

TEST_CASE("synth") {
  const std::string script = write("script.json", kScript);
  const std::string a = out_dir("a.csv"), b = out_dir("b.csv");
  REQUIRE(run({"synth", "--script", script, "--len", "300", "--seed", "4", "--out", a}).code == mantra::kExitOk);
  REQUIRE(run({"synth", "--script", script, "--len", "300", "--seed", "4", "--out", b}).code == mantra::kExitOk);
  CHECK(slurp(a) == slurp(b));
  CHECK(line_count(a) == 301);
  CHECK(slurp(root() / "a.drift.txt") == "200\n");
  CHECK(slurp(root() / "a.drift.txt") == slurp(root() / "b.drift.txt"));

  const std::string bad = write("bad_script.json", "{\"kind\": \"abrupt\",\n  \"segments\": [}\n");
  const Run r = run({"synth", "--script", bad, "--len", "10", "--out", out_dir("c.csv")});
  CHECK(r.code == mantra::kExitUsage);
  CHECK(r.err.find("line 2") != std::string::npos);
  CHECK(r.err.find("column") != std::string::npos);

  const std::string invalid = write("zero_script.json", R"({"segments": [{"length": 0}]})");
  CHECK(run({"synth", "--script", invalid, "--len", "10", "--out", out_dir("d.csv")}).code == mantra::kExitUsage);
}

TEST_CASE("train config errors") {
  SUBCASE("unknown key") {
    const std::string cfg = write("unknown.json", R"({"model": {"d_model": 8, "dmodel": 8}})");
    const Run r = run({"train", "--config", cfg, "--out", out_dir("unknown_run")});
    CHECK(r.code == mantra::kExitUsage);
    CHECK(r.err.find("model.dmodel") != std::string::npos);
    CHECK_FALSE(fs::exists(out_dir("unknown_run")));
  }
  SUBCASE("malformed JSON") {
    const std::string cfg = write("malformed.json", "{\"train\": {\"epochs\": 1,}}");
    const Run r = run({"train", "--config", cfg, "--out", out_dir("malformed_run")});
    CHECK(r.code == mantra::kExitUsage);
    CHECK(r.err.find("line 1") != std::string::npos);
  }
  SUBCASE("missing data file") {
    const std::string cfg = write("missing.json", R"({"data": {"path": "no_such_file.csv"}})");
    const Run r = run({"train", "--config", cfg, "--out", out_dir("missing_run")});
    CHECK(r.code == mantra::kExitUsage);
    CHECK_FALSE(fs::exists(out_dir("missing_run")));
  }
  SUBCASE("dry run") {
    const std::string cfg = write("tiny.json", kTinyConfig);
    const Run r = run({"train", "--config", cfg, "--dry-run"});
    CHECK(r.code == mantra::kExitOk);
    CHECK(r.out.find("fast") != std::string::npos);
    CHECK(r.out.find("slow") != std::string::npos);
    CHECK(r.out.find("urt") != std::string::npos);
  }
}

TEST_CASE("train, eval and adapt") {
  const std::string cfg = write("tiny.json", kTinyConfig);
  const std::string run_dir = out_dir("tiny_run");
  const Run t = run({"train", "--config", cfg, "--out", run_dir});
  REQUIRE_MESSAGE(t.code == mantra::kExitOk, t.err);
  for (const char* f : {"config.json", "loss_curve.csv", "model.ckpt", "metrics.json", "predictions.csv"}) {
    CHECK_MESSAGE(fs::exists(fs::path(run_dir) / f), f);
  }

  const auto metrics = nlohmann::json::parse(slurp(fs::path(run_dir) / "metrics.json"));
  REQUIRE(metrics.is_array());
  std::size_t test_windows = 0;
  for (const auto& m : metrics) {
    for (const char* key : {"split", "mse", "mae", "n_windows"}) CHECK(m.contains(key));
    CHECK(std::isfinite(m["mse"].get<double>()));
    if (m["split"] == "test") test_windows = m["n_windows"].get<std::size_t>();
  }
  CHECK(test_windows > 0);
  CHECK(line_count(fs::path(run_dir) / "predictions.csv") == test_windows + 1);

  // The synthesized training data is the sine + trend stream; write it out for eval and adapt.
  const std::string script = write("sine.json", R"({"segments": [{"length": 300, "frequency": 0.05,
    "amplitude": 1.0, "trend_slope": 0.0005, "noise_std": 0.1}]})");
  const std::string data = out_dir("sine.csv");
  REQUIRE(run({"synth", "--script", script, "--len", "300", "--seed", "1", "--out", data}).code == mantra::kExitOk);

  const std::string ckpt = (fs::path(run_dir) / "model.ckpt").string();
  const std::string eval_dir = out_dir("tiny_eval");
  const Run e = run({"eval", "--checkpoint", ckpt, "--data", data, "--out", eval_dir});
  REQUIRE_MESSAGE(e.code == mantra::kExitOk, e.err);
  const auto eval_metrics = nlohmann::json::parse(slurp(fs::path(eval_dir) / "metrics.json"));
  const std::size_t n = eval_metrics.at(0).at("n_windows").get<std::size_t>();
  CHECK(n == test_windows);
  CHECK(line_count(fs::path(eval_dir) / "predictions.csv") == n + 1);

  const std::string adapt_dir = out_dir("tiny_adapt");
  const Run a = run({"adapt", "--checkpoint", ckpt, "--data", data, "--from", "150", "--epochs", "0", "--out", adapt_dir});
  REQUIRE_MESSAGE(a.code == mantra::kExitOk, a.err);
  CHECK(a.out.find("trainable fraction") != std::string::npos);
  std::istringstream rows(slurp(fs::path(adapt_dir) / "adapt_metrics.csv"));
  std::string header, pre, post;
  std::getline(rows, header);
  std::getline(rows, pre);
  std::getline(rows, post);
  CHECK(header == "stage,mse,mae,n_windows");
  REQUIRE(pre.rfind("pre,", 0) == 0);
  REQUIRE(post.rfind("post,", 0) == 0);
  CHECK(pre.substr(4) == post.substr(5));

  CHECK(run({"eval", "--checkpoint", out_dir("none.ckpt"), "--data", data, "--out", out_dir("x")}).code ==
        mantra::kExitUsage);
}

TEST_CASE("compare") {
  const std::string ours = write("ours.json", "1.168");
  const std::string base = write("base.json", "1.503");
  const Run r = run({"compare", "--ours", ours, "--baseline", base});
  REQUIRE(r.code == mantra::kExitOk);
  std::istringstream rows(r.out);
  std::string header, row;
  std::getline(rows, header);
  std::getline(rows, row);
  CHECK(header == "dataset,horizon,metric,ours,baseline,improvement_pct,p_value,significant");
  std::vector<std::string> fields;
  std::stringstream ss(row);
  for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
  REQUIRE(fields.size() >= 6);
  const double improvement = std::stod(fields[5]);
  CHECK(std::round(improvement * 100.0) / 100.0 == doctest::Approx(22.29).epsilon(1e-12));

  const std::string bad = write("bad_compare.json", R"({"dataset": "x", "values": [1], "extra": 2})");
  CHECK(run({"compare", "--ours", bad, "--baseline", base}).code == mantra::kExitUsage);
}

TEST_CASE("gradcheck") {
  const Run r = run({"gradcheck", "--draws", "2"});
  CHECK(r.code == mantra::kExitOk);
  CHECK(r.out.rfind("check,draws,max_error,status\n", 0) == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
}
