#pragma once

// JSON run configuration. Every field has a default; unknown keys are
// rejected with their dotted path. Relative data paths resolve against the
// directory of the config file.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "mantra/data.hpp"
#include "mantra/ensemble.hpp"
#include "mantra/training.hpp"

namespace mantra {

struct SynthSource {
  DriftScript script;
  std::size_t length = 2000;
  std::uint64_t seed = 1;
};

struct DataConfig {
  std::string path;                 // CSV file
  std::optional<SynthSource> synth;  // inline stream instead of a file
  std::array<double, 3> split{0.7, 0.1, 0.2};
  WindowSpec window;
  bool univariate = true;  // forecast one target column from all inputs
  std::string target;      // column name; empty means the last column
  std::size_t end_row = 0;  // use only rows [0, end_row); 0 keeps all
};

struct OutputConfig {
  bool predictions = true;  // per-window test prediction CSV
  bool attention = true;    // URT weights of the last test batch
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;  // in_dim, out_dim, target are filled from the data
  TrainConfig train;
  OutputConfig output;
  std::filesystem::path base_dir;  // for relative data paths
};

/// Sine plus trend plus noise, 2000 hourly rows, 7:1:2 split, I = 48, O = 24.
DriftScript sine_trend_script();
RunConfig default_synthetic_config();

/// Parses a JSON file, reporting syntax errors with line and column.
nlohmann::json read_json_file(const std::string& path);

RunConfig parse_run_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::string& path);

/// Resolved config with every default filled in; sorted keys.
nlohmann::json to_json(const RunConfig& cfg);

DriftScript parse_drift_script(const nlohmann::json& j);
nlohmann::json to_json(const DriftScript& script);

struct PreparedData {
  Dataset full;
  Splits splits;  // standardized with train statistics
  Scaler scaler;
  WindowSet train, val, test;
  std::vector<std::string> warnings;
};

/// Loads or synthesizes the series, splits, standardizes and windows it,
/// and fills the data-dependent model fields of `cfg`.
PreparedData prepare_data(RunConfig& cfg);

/// Sets in_dim, out_dim and target_channel from a dataset.
void bind_model_to_data(RunConfig& cfg, const Dataset& ds);

/// Windows of an already standardized series with the run's window spec.
WindowSet windows_for(const RunConfig& cfg, const Tensor& values);

}  // namespace mantra
