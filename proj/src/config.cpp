#include "mantra/config.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <set>

#include "mantra/errors.hpp"

namespace mantra {

using nlohmann::json;

namespace {

static_assert(std::is_same_v<std::uint64_t, unsigned long> && std::is_same_v<std::size_t, unsigned long>);

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + " must be a JSON object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void get(const char* key, std::size_t& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(where(key) + " must be a nonnegative integer");
    out = v.get<std::size_t>();
  }
  void get(const char* key, double& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_number()) throw ConfigError(where(key) + " must be a number");
    out = v.get<double>();
  }
  void get(const char* key, bool& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + " must be true or false");
    out = v.get<bool>();
  }
  void get(const char* key, std::string& out) {
    if (!has(key)) return;
    const json& v = raw(key);
    if (!v.is_string()) throw ConfigError(where(key) + " must be a string");
    out = v.get<std::string>();
  }

  template <typename E>
  void get_enum(const char* key, E& out, std::initializer_list<std::pair<const char*, E>> names) {
    std::string s;
    get(key, s);
    if (s.empty()) return;
    std::string options;
    for (const auto& [name, value] : names) {
      if (s == name) {
        out = value;
        return;
      }
      options += options.empty() ? name : std::string(", ") + name;
    }
    throw ConfigError(where(key) + " must be one of " + options + " (got '" + s + "')");
  }

  std::string where(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& item : j_.items()) {
      if (!seen_.count(item.key())) throw ConfigError("unknown key '" + path_ + "." + item.key() + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

const char* path_name(CorrelationPath p) {
  switch (p) {
    case CorrelationPath::Direct: return "direct";
    case CorrelationPath::Fft: return "fft";
    default: return "auto";
  }
}

DriftSegment parse_segment(const json& j, const std::string& path) {
  Section s(j, path);
  DriftSegment seg;
  s.get("length", seg.length);
  s.get("frequency", seg.frequency);
  s.get("amplitude", seg.amplitude);
  s.get("trend_slope", seg.trend_slope);
  s.get("noise_std", seg.noise_std);
  s.finish();
  return seg;
}

DriftScript parse_script_at(const json& j, const std::string& path) {
  Section s(j, path);
  DriftScript script;
  s.get_enum("kind", script.kind, {{"abrupt", DriftKind::Abrupt}, {"gradual", DriftKind::Gradual}});
  s.get("blend_len", script.blend_len);
  if (s.has("segments")) {
    const json& segs = s.raw("segments");
    if (!segs.is_array()) throw ConfigError(path + ".segments must be an array");
    for (std::size_t i = 0; i < segs.size(); ++i) {
      script.segments.push_back(parse_segment(segs[i], path + ".segments[" + std::to_string(i) + "]"));
    }
  }
  s.finish();
  validate(script);
  return script;
}

}  // namespace

DriftScript sine_trend_script() {
  DriftScript script;
  script.segments.push_back(DriftSegment{2000, 0.05, 1.0, 0.0005, 0.1});
  return script;
}

RunConfig default_synthetic_config() {
  RunConfig cfg;
  cfg.data.synth = SynthSource{sine_trend_script(), 2000, 1};
  cfg.model.backbone.input_len = cfg.data.window.input_len;
  cfg.model.backbone.pred_len = cfg.data.window.pred_len;
  return cfg;
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  const std::string text((std::istreambuf_iterator<char>(in)), {});
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    const auto [line, col] = line_column(text, e.byte);
    std::string msg = e.what();
    if (const auto pos = msg.find(": syntax error"); pos != std::string::npos) msg = msg.substr(pos + 2);
    throw ConfigError(path + ": line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + msg);
  }
}

DriftScript parse_drift_script(const json& j) { return parse_script_at(j, "script"); }

json to_json(const DriftScript& script) {
  json segs = json::array();
  for (const DriftSegment& s : script.segments) {
    segs.push_back({{"length", s.length},
                    {"frequency", s.frequency},
                    {"amplitude", s.amplitude},
                    {"trend_slope", s.trend_slope},
                    {"noise_std", s.noise_std}});
  }
  return {{"kind", script.kind == DriftKind::Abrupt ? "abrupt" : "gradual"},
          {"blend_len", script.blend_len},
          {"segments", segs}};
}

RunConfig parse_run_config(const json& j, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  cfg.base_dir = base_dir;
  Section root(j, "config");
  auto section = [&](const char* name, auto&& fill) {
    if (!root.has(name)) return;
    Section s(root.raw(name), name);
    fill(s);
    s.finish();
  };

  section("data", [&](Section& s) {
    DataConfig& d = cfg.data;
    s.get("path", d.path);
    if (s.has("synth")) {
      Section syn(s.raw("synth"), "data.synth");
      SynthSource src;
      syn.get("length", src.length);
      syn.get("seed", src.seed);
      if (!syn.has("script")) throw ConfigError("data.synth.script is required");
      src.script = parse_script_at(syn.raw("script"), "data.synth.script");
      syn.finish();
      d.synth = src;
    }
    if (s.has("split")) {
      const json& r = s.raw("split");
      if (!r.is_array() || r.size() != 3) throw ConfigError("data.split must be an array of three ratios");
      for (std::size_t i = 0; i < 3; ++i) {
        if (!r[i].is_number()) throw ConfigError("data.split must hold numbers");
        d.split[i] = r[i].get<double>();
      }
    }
    s.get("input_len", d.window.input_len);
    s.get("pred_len", d.window.pred_len);
    s.get("stride", d.window.stride);
    std::string mode = d.univariate ? "univariate" : "multivariate";
    s.get("mode", mode);
    if (mode != "univariate" && mode != "multivariate") {
      throw ConfigError("data.mode must be univariate or multivariate (got '" + mode + "')");
    }
    d.univariate = mode == "univariate";
    s.get("target", d.target);
    s.get("end_row", d.end_row);
  });

  section("model", [&](Section& s) {
    BackboneConfig& b = cfg.model.backbone;
    s.get("d_model", b.d_model);
    s.get("d_ff", b.d_ff);
    s.get("enc_layers", b.enc_layers);
    s.get("dec_layers", b.dec_layers);
    s.get("heads", b.heads);
    s.get("kernel", b.kernel);
    s.get("c", b.c);
    s.get("dropout", b.dropout);
    s.get_enum("correlation", b.path,
               {{"auto", CorrelationPath::Auto}, {"direct", CorrelationPath::Direct}, {"fft", CorrelationPath::Fft}});
  });

  section("ensemble", [&](Section& s) {
    EnsembleConfig& e = cfg.model.ensemble;
    s.get("learners", e.learners);
    s.get("seed", e.seed);
    s.get("fuse_slow", e.fuse_slow);
    if (s.has("seeds")) {
      const json& seeds = s.raw("seeds");
      if (!seeds.is_array()) throw ConfigError("ensemble.seeds must be an array");
      for (const json& v : seeds) {
        if (!v.is_number_unsigned()) throw ConfigError("ensemble.seeds must hold nonnegative integers");
        e.seeds.push_back(v.get<std::uint64_t>());
      }
    }
  });

  section("urt", [&](Section& s) {
    UrtConfig& u = cfg.model.urt;
    s.get("heads", u.heads);
    s.get("key_dim", u.key_dim);
    s.get("final_map", u.final_map);
    s.get("omega", u.omega);
  });

  section("slow", [&](Section& s) {
    SlowConfig& sl = cfg.train.slow;
    s.get("rho", sl.rho);
    s.get("epsilon", sl.epsilon);
    s.get("lambda", sl.lambda);
  });

  section("train", [&](Section& s) {
    TrainConfig& t = cfg.train;
    s.get("epochs", t.epochs);
    s.get("urt_epochs", t.urt_epochs);
    s.get("adapt_epochs", t.adapt_epochs);
    s.get("batch_size", t.batch_size);
    s.get("lr", t.lr);
    s.get("urt_lr", t.urt_lr);
    s.get("lr_decay", t.lr_decay);
    s.get("patience", t.patience);
    s.get("seed", t.seed);
    s.get_enum("phase1_aggregation", t.phase1_aggregation,
               {{"independent", Phase1Aggregation::Independent}, {"through_urt", Phase1Aggregation::ThroughUrt}});
  });

  section("output", [&](Section& s) {
    s.get("predictions", cfg.output.predictions);
    s.get("attention", cfg.output.attention);
  });
  root.finish();

  const DataConfig& d = cfg.data;
  if (d.path.empty() == !d.synth.has_value()) throw ConfigError("data needs exactly one of 'path' or 'synth'");
  for (double r : d.split) {
    if (!(r > 0.0)) throw ConfigError("data.split ratios must be positive");
  }
  if (d.window.input_len == 0 || d.window.pred_len == 0 || d.window.stride == 0) {
    throw ConfigError("data.input_len, data.pred_len and data.stride must be positive");
  }
  if (d.window.input_len % 2 != 0) throw ConfigError("data.input_len must be even");
  cfg.model.backbone.input_len = d.window.input_len;
  cfg.model.backbone.pred_len = d.window.pred_len;
  validate(cfg.model.ensemble);
  validate(cfg.model.urt);
  validate(cfg.train);
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  return parse_run_config(read_json_file(path), std::filesystem::path(path).parent_path());
}

json to_json(const RunConfig& cfg) {
  const DataConfig& d = cfg.data;
  const BackboneConfig& b = cfg.model.backbone;
  const TrainConfig& t = cfg.train;
  json data = {{"split", d.split},
               {"input_len", d.window.input_len},
               {"pred_len", d.window.pred_len},
               {"stride", d.window.stride},
               {"mode", d.univariate ? "univariate" : "multivariate"},
               {"target", d.target},
               {"end_row", d.end_row}};
  if (d.synth) {
    data["synth"] = {{"length", d.synth->length}, {"seed", d.synth->seed}, {"script", to_json(d.synth->script)}};
  } else {
    data["path"] = d.path;
  }
  return {
      {"data", data},
      {"model",
       {{"d_model", b.d_model},
        {"d_ff", b.d_ff},
        {"enc_layers", b.enc_layers},
        {"dec_layers", b.dec_layers},
        {"heads", b.heads},
        {"kernel", b.kernel},
        {"c", b.c},
        {"dropout", b.dropout},
        {"correlation", path_name(b.path)}}},
      {"ensemble",
       {{"learners", cfg.model.ensemble.learners},
        {"seed", cfg.model.ensemble.seed},
        {"seeds", cfg.model.ensemble.resolved_seeds()},
        {"fuse_slow", cfg.model.ensemble.fuse_slow}}},
      {"urt",
       {{"heads", cfg.model.urt.heads},
        {"key_dim", cfg.model.urt.key_dim},
        {"final_map", cfg.model.urt.final_map || cfg.model.urt.heads > 1},
        {"omega", cfg.model.urt.omega}}},
      {"slow", {{"rho", t.slow.rho}, {"epsilon", t.slow.epsilon}, {"lambda", t.slow.lambda}}},
      {"train",
       {{"epochs", t.epochs},
        {"urt_epochs", t.urt_epochs},
        {"adapt_epochs", t.adapt_epochs},
        {"batch_size", t.batch_size},
        {"lr", t.lr},
        {"urt_lr", t.urt_lr},
        {"lr_decay", t.lr_decay},
        {"patience", t.patience},
        {"seed", t.seed},
        {"phase1_aggregation",
         t.phase1_aggregation == Phase1Aggregation::Independent ? "independent" : "through_urt"}}},
      {"output", {{"predictions", cfg.output.predictions}, {"attention", cfg.output.attention}}},
  };
}

void bind_model_to_data(RunConfig& cfg, const Dataset& ds) {
  BackboneConfig& b = cfg.model.backbone;
  b.in_dim = ds.dims();
  std::size_t target = ds.dims() - 1;
  if (!cfg.data.target.empty()) {
    const auto& names = ds.feature_names;
    const auto it = std::find(names.begin(), names.end(), cfg.data.target);
    if (it == names.end()) throw ConfigError("data.target '" + cfg.data.target + "' is not a column of the data");
    target = static_cast<std::size_t>(it - names.begin());
  }
  b.target_channel = target;
  b.out_dim = cfg.data.univariate ? 1 : ds.dims();
  validate(cfg.model);
}

WindowSet windows_for(const RunConfig& cfg, const Tensor& values) {
  const BackboneConfig& b = cfg.model.backbone;
  return make_windows(values, cfg.data.window, b.out_dim, b.target());
}

PreparedData prepare_data(RunConfig& cfg) {
  PreparedData p;
  if (cfg.data.synth) {
    p.full = synth_drift(cfg.data.synth->script, cfg.data.synth->length, cfg.data.synth->seed).data;
  } else {
    std::filesystem::path path = cfg.data.path;
    if (path.is_relative() && !cfg.base_dir.empty()) path = cfg.base_dir / path;
    p.full = load_csv(path.string());
  }
  if (cfg.data.end_row > 0) {
    if (cfg.data.end_row > p.full.rows()) {
      throw ConfigError("data.end_row " + std::to_string(cfg.data.end_row) + " exceeds the " +
                        std::to_string(p.full.rows()) + " rows of the data");
    }
    p.full = slice_rows(p.full, 0, cfg.data.end_row);
  }
  bind_model_to_data(cfg, p.full);
  const std::size_t min_rows = cfg.data.window.input_len + cfg.data.window.pred_len;
  p.splits = chrono_split(p.full, cfg.data.split, min_rows);
  p.warnings = standardize(p.splits, p.scaler);
  p.train = windows_for(cfg, p.splits.train.values);
  p.val = windows_for(cfg, p.splits.val.values);
  p.test = windows_for(cfg, p.splits.test.values);
  return p;
}

}  // namespace mantra
