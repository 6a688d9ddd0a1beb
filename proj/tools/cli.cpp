#include "cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <sstream>
#include <tuple>

#include "mantra/checkpoint.hpp"
#include "mantra/config.hpp"
#include "mantra/errors.hpp"
#include "mantra/gradcheck.hpp"
#include "mantra/stats.hpp"

namespace mantra {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::ofstream open_out(const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << std::setprecision(10);
  return f;
}

void write_text(const fs::path& path, const std::string& text) { open_out(path) << text; }

std::string checkpoint_config(const RunConfig& cfg, const Scaler& scaler, const std::vector<std::string>& features) {
  const BackboneConfig& b = cfg.model.backbone;
  const json j = {{"run", to_json(cfg)},
                  {"bound", {{"in_dim", b.in_dim}, {"out_dim", b.out_dim}, {"target_channel", b.target()}}},
                  {"scaler", {{"mean", scaler.mean}, {"std", scaler.std}}},
                  {"features", features}};
  return j.dump();
}

struct LoadedModel {
  RunConfig cfg;
  Scaler scaler;
  std::vector<std::string> features;
  std::unique_ptr<MantraModel> model;
};

LoadedModel load_model(const std::string& path) {
  json j;
  try {
    j = json::parse(read_checkpoint_config(path));
  } catch (const json::exception& e) {
    throw CheckpointError(path + ": corrupt config block (" + std::string(e.what()) + ")");
  }
  LoadedModel m;
  try {
    m.cfg = parse_run_config(j.at("run"));
    BackboneConfig& b = m.cfg.model.backbone;
    b.in_dim = j.at("bound").at("in_dim").get<std::size_t>();
    b.out_dim = j.at("bound").at("out_dim").get<std::size_t>();
    b.target_channel = j.at("bound").at("target_channel").get<std::size_t>();
    m.scaler.mean = j.at("scaler").at("mean").get<std::vector<double>>();
    m.scaler.std = j.at("scaler").at("std").get<std::vector<double>>();
    m.features = j.at("features").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw CheckpointError(path + ": incomplete config block (" + std::string(e.what()) + ")");
  }
  m.model = std::make_unique<MantraModel>(m.cfg.model);
  const std::vector<Parameter*> params = m.model->parameters();
  load_checkpoint(path, params);
  return m;
}

Dataset load_matching(const LoadedModel& m, const std::string& path) {
  Dataset ds = load_csv(path);
  if (ds.dims() != m.cfg.model.backbone.in_dim) {
    throw ConfigError(path + " has " + std::to_string(ds.dims()) + " value columns, the model expects " +
                      std::to_string(m.cfg.model.backbone.in_dim));
  }
  return ds;
}

json metrics_entry(const std::string& split, const Metrics& m, std::size_t n) {
  return {{"split", split}, {"mse", m.mse}, {"mae", m.mae}, {"n_windows", n}};
}

void write_predictions(const fs::path& path, const RunConfig& cfg, const Scaler& scaler,
                       const std::vector<std::string>& features, const Tensor& pred) {
  const BackboneConfig& b = cfg.model.backbone;
  std::ofstream f = open_out(path);
  f << "window";
  for (std::size_t h = 0; h < b.pred_len; ++h) {
    for (std::size_t c = 0; c < b.out_dim; ++c) {
      f << ",h" << h + 1;
      if (b.out_dim > 1) f << '_' << features[c];
    }
  }
  f << '\n';
  for (std::size_t n = 0; n < pred.dim(0); ++n) {
    f << n;
    for (std::size_t h = 0; h < b.pred_len; ++h) {
      for (std::size_t c = 0; c < b.out_dim; ++c) {
        const std::size_t channel = b.out_dim == 1 ? b.target() : c;
        f << ',' << scaler.inverse(pred.at(n, h, c), channel);
      }
    }
    f << '\n';
  }
}

void write_attention(const fs::path& path, const Tensor& alpha) {
  std::ofstream f = open_out(path);
  f << "head,learner,alpha\n";
  dump_attention(f, alpha);
}

struct Evaluated {
  Metrics metrics;
  Tensor prediction;
  AttentionStats attention;
};

Evaluated evaluate_windows(MantraModel& model, const WindowSet& w, std::size_t batch_size) {
  Evaluated e;
  const std::vector<Tensor> forecasts = learner_forecasts(model, w.x, batch_size);
  e.prediction = combine_forecasts(model, forecasts, batch_size, Aggregation::Urt, &e.attention);
  e.metrics = mse_mae(e.prediction, w.y);
  return e;
}

void print_counts(std::ostream& out, MantraModel& model) {
  const ParameterCounts c = model.counts();
  const std::size_t M = model.learners();
  out << "fast    " << M << " x " << c.fast / M << " = " << c.fast << '\n'
      << "slow    " << c.slow << '\n'
      << "urt     " << c.urt << '\n'
      << "total   " << c.total() << '\n';
}

void warn_all(std::ostream& err, const std::vector<std::string>& warnings) {
  for (const std::string& w : warnings) err << "warning: " << w << '\n';
}

// --- commands ---------------------------------------------------------------

int cmd_synth(const std::string& script_path, std::size_t len, std::uint64_t seed, const std::string& out_path,
              std::ostream& err) {
  const DriftScript script = parse_drift_script(read_json_file(script_path));
  const SynthResult r = synth_drift(script, len, seed);
  const fs::path out(out_path);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_csv(r.data, out.string());
  fs::path sidecar = out;
  sidecar.replace_extension(".drift.txt");
  std::ofstream f = open_out(sidecar);
  for (std::size_t p : r.drift_points) f << p << '\n';
  err << "wrote " << len << " rows to " << out.string() << ", drift points to " << sidecar.string() << '\n';
  return kExitOk;
}

int cmd_train(const std::string& config_path, const std::string& data_override, const std::string& out_dir,
              bool dry_run, std::ostream& out, std::ostream& err) {
  RunConfig cfg = load_run_config(config_path);
  if (!data_override.empty()) {
    cfg.data.path = data_override;
    cfg.data.synth.reset();
    cfg.base_dir.clear();
  }
  PreparedData data = prepare_data(cfg);
  warn_all(err, data.warnings);
  warn_all(err, validate(cfg.model));
  MantraModel model(cfg.model);
  if (dry_run) {
    print_counts(out, model);
    return kExitOk;
  }
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_text(dir / "config.json", to_json(cfg).dump(2) + "\n");
  err << "windows: train " << data.train.size() << ", val " << data.val.size() << ", test " << data.test.size()
      << '\n';

  const TrainReport p1 = train_phase1(model, data.train, data.val, cfg.train);
  err << "phase 1: " << p1.epochs_run << " epochs, val mse " << p1.initial_val << " -> " << p1.best_val << " ("
      << p1.seconds << " s)\n";
  const TrainReport p2 = train_phase2_urt(model, data.train, data.val, cfg.train);
  err << "phase 2: " << p2.epochs_run << " epochs, val mse " << p2.initial_val << " -> " << p2.best_val << " ("
      << p2.seconds << " s)\n";

  LossCurve curve = p1.curve;
  curve.insert(curve.end(), p2.curve.begin(), p2.curve.end());
  {
    std::ofstream f = open_out(dir / "loss_curve.csv");
    write_curve_csv(f, curve);
  }
  const std::vector<Parameter*> params = model.parameters();
  save_checkpoint((dir / "model.ckpt").string(), checkpoint_config(cfg, data.scaler, data.full.feature_names), params);

  json metrics = json::array();
  Evaluated test;
  for (const auto& [name, w] : {std::pair<std::string, const WindowSet*>{"train", &data.train},
                                {"val", &data.val},
                                {"test", &data.test}}) {
    Evaluated e = evaluate_windows(model, *w, cfg.train.batch_size);
    metrics.push_back(metrics_entry(name, e.metrics, w->size()));
    out << std::left << std::setw(6) << name << " mse " << e.metrics.mse << "  mae " << e.metrics.mae << '\n';
    if (name == "test") test = std::move(e);
  }
  write_text(dir / "metrics.json", metrics.dump(2) + "\n");
  if (cfg.output.predictions) {
    write_predictions(dir / "predictions.csv", cfg, data.scaler, data.full.feature_names, test.prediction);
  }
  if (cfg.output.attention && !test.attention.last_alpha.empty()) {
    write_attention(dir / "attention.csv", test.attention.last_alpha);
  }
  return kExitOk;
}

int cmd_eval(const std::string& ckpt, const std::string& data_path, const std::string& split,
             const std::string& out_dir, std::ostream& out) {
  LoadedModel m = load_model(ckpt);
  const Dataset ds = load_matching(m, data_path);
  const Splits splits = chrono_split(ds, m.cfg.data.split, m.cfg.data.window.input_len + m.cfg.data.window.pred_len);
  const Dataset& part = split == "train" ? splits.train : split == "val" ? splits.val : split == "test" ? splits.test : ds;
  const WindowSet w = windows_for(m.cfg, m.scaler.transform(part.values));
  const Evaluated e = evaluate_windows(*m.model, w, m.cfg.train.batch_size);
  const fs::path dir(out_dir);
  fs::create_directories(dir);
  write_text(dir / "metrics.json", json::array({metrics_entry(split, e.metrics, w.size())}).dump(2) + "\n");
  write_predictions(dir / "predictions.csv", m.cfg, m.scaler, m.features, e.prediction);
  out << split << " mse " << e.metrics.mse << "  mae " << e.metrics.mae << "  windows " << w.size() << '\n';
  return kExitOk;
}

int cmd_adapt(const std::string& ckpt, const std::string& data_path, std::size_t from, std::optional<std::size_t> epochs,
              double holdout, const std::string& out_dir, std::ostream& out, std::ostream& err) {
  LoadedModel m = load_model(ckpt);
  const Dataset ds = load_matching(m, data_path);
  if (from >= ds.rows()) throw ConfigError("--from " + std::to_string(from) + " is past the end of the data");
  if (!(holdout > 0.0 && holdout < 1.0)) throw ConfigError("--holdout must lie in (0, 1)");
  const Tensor values = m.scaler.transform(slice_rows(ds, from, ds.rows()).values);
  const std::size_t rows = values.dim(0);
  const std::size_t cut = rows - static_cast<std::size_t>(std::llround(holdout * static_cast<double>(rows)));
  const std::size_t need = m.cfg.data.window.input_len + m.cfg.data.window.pred_len;
  if (cut < need || rows - cut < need) {
    throw ConfigError("post-drift stream of " + std::to_string(rows) + " rows is too short to split into adapt and " +
                      "holdout parts of at least " + std::to_string(need) + " rows");
  }
  Dataset tail;
  tail.values = values;
  const WindowSet adapt = windows_for(m.cfg, slice_rows(tail, 0, cut).values);
  const WindowSet hold = windows_for(m.cfg, slice_rows(tail, cut, rows).values);
  TrainConfig tcfg = m.cfg.train;
  if (epochs) tcfg.adapt_epochs = *epochs;
  const AdaptReport r = adapt_to_drift(*m.model, adapt, hold, tcfg);

  const fs::path dir(out_dir);
  fs::create_directories(dir);
  {
    std::ofstream f = open_out(dir / "adapt_metrics.csv");
    f << "stage,mse,mae,n_windows\n"
      << "pre," << r.pre.mse << ',' << r.pre.mae << ',' << hold.size() << '\n'
      << "post," << r.post.mse << ',' << r.post.mae << ',' << hold.size() << '\n';
  }
  {
    std::ofstream f = open_out(dir / "adapt_curve.csv");
    write_curve_csv(f, r.curve);
  }
  const std::vector<Parameter*> params = m.model->parameters();
  save_checkpoint((dir / "adapted.ckpt").string(), checkpoint_config(m.cfg, m.scaler, m.features), params);

  out << std::setprecision(6) << "stage  mse        mae\n"
      << "pre    " << r.pre.mse << "  " << r.pre.mae << '\n'
      << "post   " << r.post.mse << "  " << r.post.mae << '\n'
      << "trainable fraction " << r.freeze.fraction << " (" << r.freeze.trainable << " of " << r.freeze.total
      << " parameters)\n";
  err << "adapted on " << adapt.size() << " windows for " << r.epochs << " epochs, scored on " << hold.size()
      << " holdout windows (" << r.seconds_per_epoch << " s per epoch)\n";
  return kExitOk;
}

int cmd_gradcheck(std::size_t draws, std::uint64_t seed, std::ostream& out) {
  GradSuiteConfig cfg;
  cfg.draws = draws;
  cfg.seed = seed;
  bool ok = true;
  out << "check,draws,max_error,status\n";
  for (const GradCheckResult& r : run_gradcheck_suite(cfg)) {
    out << r.name << ',' << r.draws << ',' << std::scientific << std::setprecision(3) << r.max_error
        << std::defaultfloat << ',' << (r.passed ? "pass" : "FAIL") << '\n';
    ok = ok && r.passed;
  }
  return ok ? kExitOk : kExitNumeric;
}

int cmd_bench(const std::string& config_path, const std::vector<std::size_t>& sizes, std::size_t repeats,
              const std::string& out_dir, std::ostream& out, std::ostream& err) {
  RunConfig cfg = config_path.empty() ? default_synthetic_config() : load_run_config(config_path);
  const PreparedData data = prepare_data(cfg);
  if (sizes.back() > data.train.size()) {
    throw ConfigError("bench size " + std::to_string(sizes.back()) + " exceeds the " +
                      std::to_string(data.train.size()) + " training windows");
  }
  err << "timing one epoch per setting, best of " << repeats << '\n';
  const std::vector<BenchRow> rows = bench_epoch_time(cfg.model, data.train, sizes, cfg.train, repeats);
  write_bench_csv(out, rows);
  const BenchSummary s = summarize_bench(rows);
  out << "# N ratio " << s.n_ratio << ", M 1->2 ratio " << s.m_ratio << ", mantra slower than single "
      << (s.mantra_slower ? "yes" : "no") << '\n';
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream f = open_out(fs::path(out_dir) / "bench.csv");
    write_bench_csv(f, rows);
  }
  return kExitOk;
}

std::vector<ComparisonRow> read_results(const std::string& path) {
  const json j = read_json_file(path);
  auto values = [&](const json& v) {
    std::vector<double> xs;
    if (v.is_number()) xs.push_back(v.get<double>());
    else if (v.is_array() && !v.empty() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); }))
      xs = v.get<std::vector<double>>();
    else throw ConfigError(path + ": values must be a number or a nonempty array of numbers");
    return xs;
  };
  std::vector<ComparisonRow> rows;
  auto entry = [&](const json& e) {
    if (!e.is_object()) throw ConfigError(path + ": each result must be an object");
    for (const auto& item : e.items()) {
      if (item.key() != "dataset" && item.key() != "horizon" && item.key() != "metric" && item.key() != "values") {
        throw ConfigError(path + ": unknown key '" + item.key() + "'");
      }
    }
    if (!e.contains("values")) throw ConfigError(path + ": result without 'values'");
    ComparisonRow r;
    r.dataset = e.value("dataset", std::string("-"));
    r.horizon = e.value("horizon", 0);
    r.metric = e.value("metric", std::string("mse"));
    r.ours = values(e.at("values"));
    rows.push_back(std::move(r));
  };
  if (j.is_number() || j.is_array()) {
    if (j.is_array() && !j.empty() && j.front().is_object()) {
      for (const json& e : j) entry(e);
    } else {
      rows.push_back(ComparisonRow{"-", 0, "mse", values(j), {}});
    }
  } else if (j.is_object() && j.contains("results")) {
    for (const json& e : j.at("results")) entry(e);
  } else {
    entry(j);
  }
  return rows;
}

int cmd_compare(const std::string& ours_path, const std::string& baseline_path, const std::string& out_dir,
                std::ostream& out) {
  const std::vector<ComparisonRow> ours = read_results(ours_path);
  const std::vector<ComparisonRow> base = read_results(baseline_path);
  std::map<std::tuple<std::string, int, std::string>, std::vector<double>> lookup;
  for (const ComparisonRow& b : base) lookup[{b.dataset, b.horizon, b.metric}] = b.ours;
  std::vector<ComparisonResult> results;
  for (ComparisonRow r : ours) {
    const auto it = lookup.find({r.dataset, r.horizon, r.metric});
    if (it == lookup.end()) {
      throw ConfigError("no baseline for " + r.dataset + "/" + std::to_string(r.horizon) + "/" + r.metric);
    }
    r.baseline = it->second;
    results.push_back(compare_row(r));
  }
  write_comparison_csv(out, results);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ofstream f = open_out(fs::path(out_dir) / "comparison.csv");
    write_comparison_csv(f, results);
  }
  return kExitOk;
}

std::vector<std::size_t> parse_sizes(const std::string& text) {
  std::vector<std::size_t> sizes;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const unsigned long v = std::stoul(item, &used);
      if (used != item.size() || v == 0) throw std::invalid_argument(item);
      sizes.push_back(v);
    } catch (const std::logic_error&) {
      throw ConfigError("--sizes must be a comma-separated list of positive integers");
    }
  }
  if (sizes.empty()) throw ConfigError("--sizes is empty");
  return sizes;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ensemble long-term forecasting with drift adaptation", "mantra"};
  app.require_subcommand(1);

  std::string script, out_path, config, checkpoint, data, split = "test", ours, baseline, sizes = "128,256";
  std::size_t len = 2000, from = 0, draws = 50, repeats = 1;
  std::uint64_t seed = 1;
  std::optional<std::size_t> epochs;
  double holdout = 0.4;
  bool dry_run = false;

  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic drift stream");
  synth->add_option("--script", script, "Drift script JSON")->required();
  synth->add_option("--len", len, "Number of rows");
  synth->add_option("--seed", seed, "Noise seed");
  synth->add_option("--out", out_path, "Output CSV")->required();

  CLI::App* train = app.add_subcommand("train", "Train both phases and evaluate");
  train->add_option("--config", config, "Run config JSON")->required();
  train->add_option("--data", data, "CSV replacing the configured data source");
  train->add_option("--out", out_path, "Output directory");
  train->add_flag("--dry-run", dry_run, "Print parameter counts and exit");

  CLI::App* adapt = app.add_subcommand("adapt", "Fine-tune only the URT layer on post-drift data");
  adapt->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  adapt->add_option("--data", data, "CSV holding the drifted stream")->required();
  adapt->add_option("--from", from, "First post-drift row")->required();
  adapt->add_option("--epochs", epochs, "Adaptation epochs (default: train.adapt_epochs)");
  adapt->add_option("--holdout", holdout, "Trailing share of post-drift rows held out for scoring");
  adapt->add_option("--out", out_path, "Output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a CSV");
  eval->add_option("--checkpoint", checkpoint, "Trained checkpoint")->required();
  eval->add_option("--data", data, "CSV in the training schema")->required();
  eval->add_option("--split", split, "train, val, test or all")->check(CLI::IsMember({"train", "val", "test", "all"}));
  eval->add_option("--out", out_path, "Output directory")->required();

  CLI::App* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  gradcheck->add_option("--draws", draws, "Random draws per check");
  gradcheck->add_option("--seed", seed, "Seed");

  CLI::App* bench = app.add_subcommand("bench", "Per-epoch time against N and M");
  bench->add_option("--config", config, "Run config JSON (default: built-in sine + trend)");
  bench->add_option("--sizes", sizes, "Ascending window counts");
  bench->add_option("--repeats", repeats, "Timings per setting, best kept");
  bench->add_option("--out", out_path, "Output directory");

  CLI::App* compare = app.add_subcommand("compare", "Improvement and Welch t-test against a baseline");
  compare->add_option("--ours", ours, "Results JSON")->required();
  compare->add_option("--baseline", baseline, "Baseline results JSON")->required();
  compare->add_option("--out", out_path, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth) return cmd_synth(script, len, seed, out_path, err);
    if (*train) {
      if (out_path.empty() && !dry_run) throw ConfigError("train needs --out unless --dry-run is given");
      return cmd_train(config, data, out_path, dry_run, out, err);
    }
    if (*adapt) return cmd_adapt(checkpoint, data, from, epochs, holdout, out_path, out, err);
    if (*eval) return cmd_eval(checkpoint, data, split, out_path, out);
    if (*gradcheck) return cmd_gradcheck(draws, seed, out);
    if (*bench) {
      if (repeats == 0) throw ConfigError("--repeats must be positive");
      return cmd_bench(config, parse_sizes(sizes), repeats, out_path, out, err);
    }
    if (*compare) return cmd_compare(ours, baseline, out_path, out);
  } catch (const NumericError& e) {
    err << "numeric failure: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}

}  // namespace mantra
