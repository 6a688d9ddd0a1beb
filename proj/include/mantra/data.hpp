#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mantra/tensor.hpp"

namespace mantra {

struct Dataset {
  Tensor values;                        // [T, D]
  std::vector<std::string> timestamps;  // empty or one per row
  std::vector<std::string> feature_names;
  std::size_t target_index = 0;
  std::size_t dropped_rows = 0;

  std::size_t rows() const { return values.empty() ? 0 : values.dim(0); }
  std::size_t dims() const { return values.empty() ? 0 : values.dim(1); }
};

/// Comma-separated file with a header row. A leading column named "date"
/// (or holding non-numeric text) is kept as timestamps. Rows with NaN or
/// empty cells are dropped and counted. The target defaults to the last
/// column.
Dataset load_csv(const std::string& path);
void write_csv(const Dataset& ds, const std::string& path);

/// Rows [begin, end) of a dataset.
Dataset slice_rows(const Dataset& ds, std::size_t begin, std::size_t end);

struct Splits {
  Dataset train, val, test;
  std::array<std::size_t, 2> boundaries{};  // first row of val and of test
};

/// Contiguous chronological split. Ratios are normalized; each must be
/// positive and every part must hold at least `min_rows` rows.
Splits chrono_split(const Dataset& ds, std::array<double, 3> ratios, std::size_t min_rows = 1);

struct Scaler {
  std::vector<double> mean;
  std::vector<double> std;  // population std, 1 where the train std is 0

  Tensor transform(const Tensor& x) const;
  /// Inverse transform of a single channel (e.g. univariate targets).
  double inverse(double v, std::size_t channel) const { return v * std[channel] + mean[channel]; }
};

/// Fits on the train split only and transforms all three. Returns warnings
/// for constant features.
std::vector<std::string> standardize(Splits& splits, Scaler& scaler);
Scaler fit_scaler(const Tensor& train, std::vector<std::string>* warnings = nullptr);

struct WindowSpec {
  std::size_t input_len = 48;
  std::size_t pred_len = 24;
  std::size_t stride = 1;
};

struct WindowSet {
  Tensor x;  // [N, I, D]
  Tensor y;  // [N, O, out_dim]
  std::size_t size() const { return x.empty() ? 0 : x.dim(0); }
};

std::size_t window_count(std::size_t rows, const WindowSpec& spec);

/// Window s pairs rows [s*stride, s*stride + I) with the following O rows.
/// Targets keep every channel (out_dim == D) or only `target` (out_dim 1).
WindowSet make_windows(const Tensor& values, const WindowSpec& spec, std::size_t out_dim, std::size_t target);

/// Rows of a batch-major tensor picked by index.
Tensor gather(const Tensor& t, std::span<const std::size_t> index);
/// Contiguous batch [begin, end) of a batch-major tensor.
Tensor batch_range(const Tensor& t, std::size_t begin, std::size_t end);

enum class DriftKind { Abrupt, Gradual };

struct DriftSegment {
  std::size_t length = 500;
  double frequency = 0.05;  // cycles per step
  double amplitude = 1.0;
  double trend_slope = 0.0;  // level change per step
  double noise_std = 0.0;
};

struct DriftScript {
  std::vector<DriftSegment> segments;
  DriftKind kind = DriftKind::Abrupt;
  std::size_t blend_len = 0;
};

void validate(const DriftScript& script);

struct SynthResult {
  Dataset data;                           // one column "value", hourly timestamps
  std::vector<std::size_t> drift_points;  // first row of each later segment
};

/// Piecewise sinusoid + trend + noise. Phase and level are accumulated so
/// the stream is continuous; gradual drift blends the parameters linearly
/// over blend_len steps from each boundary. The last segment extends to
/// total_len.
SynthResult synth_drift(const DriftScript& script, std::size_t total_len, std::uint64_t seed);

/// Hourly ISO timestamp `index` hours after 2016-07-01 00:00:00.
std::string hourly_timestamp(std::size_t index);

struct Metrics {
  double mse = 0.0;
  double mae = 0.0;
};

Metrics mse_mae(const Tensor& pred, const Tensor& target);

/// Repeats the last observed target value over the horizon, [N, O, out_dim].
Tensor persistence_forecast(const WindowSet& windows, std::size_t target);

}  // namespace mantra
