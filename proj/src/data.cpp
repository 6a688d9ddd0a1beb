#include "mantra/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "mantra/errors.hpp"
#include "mantra/rng.hpp"

namespace mantra {

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  for (std::string& c : out) {
    while (!c.empty() && (c.back() == '\r' || c.back() == ' ')) c.pop_back();
    while (!c.empty() && c.front() == ' ') c.erase(c.begin());
  }
  return out;
}

bool is_missing(const std::string& cell) {
  std::string s = cell;
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char ch) { return std::tolower(ch); });
  return s.empty() || s == "nan" || s == "na" || s == "null";
}

bool parse_double(const std::string& cell, double& out) {
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  if (first != last && *first == '+') ++first;
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

}  // namespace

Dataset load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open data file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("data file '" + path + "' is empty");
  const std::vector<std::string> header = split_line(line);

  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    rows.push_back(split_line(line));
  }
  if (rows.empty()) throw ConfigError("data file '" + path + "' has no data rows");

  std::string first = header.empty() ? "" : header[0];
  std::transform(first.begin(), first.end(), first.begin(), [](unsigned char ch) { return std::tolower(ch); });
  double probe = 0.0;
  const bool has_date = first == "date" || (!rows[0].empty() && !is_missing(rows[0][0]) && !parse_double(rows[0][0], probe));
  const std::size_t offset = has_date ? 1 : 0;
  if (header.size() <= offset) throw ConfigError("data file '" + path + "' has no numeric columns");
  const std::size_t D = header.size() - offset;

  Dataset ds;
  ds.feature_names.assign(header.begin() + static_cast<std::ptrdiff_t>(offset), header.end());
  std::vector<double> values;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto& row = rows[r];
    if (row.size() != header.size()) {
      throw ConfigError(path + ": row " + std::to_string(r + 2) + " has " + std::to_string(row.size()) +
                        " cells, expected " + std::to_string(header.size()));
    }
    std::vector<double> parsed(D);
    bool missing = false;
    for (std::size_t c = 0; c < D; ++c) {
      const std::string& cell = row[offset + c];
      if (is_missing(cell)) {
        missing = true;
        continue;
      }
      if (!parse_double(cell, parsed[c])) {
        throw ConfigError(path + ": unparseable cell '" + cell + "' at row " + std::to_string(r + 2) + ", column " +
                          std::to_string(offset + c + 1) + " (" + header[offset + c] + ")");
      }
      if (!std::isfinite(parsed[c])) missing = true;
    }
    if (missing) {
      ++ds.dropped_rows;
      continue;
    }
    values.insert(values.end(), parsed.begin(), parsed.end());
    if (has_date) ds.timestamps.push_back(row[0]);
  }
  if (values.empty()) throw ConfigError("data file '" + path + "' has no complete rows");
  const std::size_t T = values.size() / D;
  ds.values = Tensor({T, D}, std::move(values));
  ds.target_index = D - 1;
  return ds;
}

void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  const bool dated = !ds.timestamps.empty();
  if (dated) out << "date";
  for (std::size_t c = 0; c < ds.feature_names.size(); ++c) out << (dated || c > 0 ? "," : "") << ds.feature_names[c];
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t r = 0; r < ds.rows(); ++r) {
    if (dated) out << ds.timestamps[r];
    for (std::size_t c = 0; c < ds.dims(); ++c) out << (dated || c > 0 ? "," : "") << ds.values.at(r, c);
    out << '\n';
  }
}

Dataset slice_rows(const Dataset& ds, std::size_t begin, std::size_t end) {
  if (begin >= end || end > ds.rows()) {
    throw std::out_of_range("slice_rows: bad range [" + std::to_string(begin) + ", " + std::to_string(end) + ")");
  }
  const std::size_t D = ds.dims();
  Dataset out;
  out.values = Tensor({end - begin, D}, std::vector<double>(ds.values.data().begin() + static_cast<std::ptrdiff_t>(begin * D),
                                                            ds.values.data().begin() + static_cast<std::ptrdiff_t>(end * D)));
  if (!ds.timestamps.empty()) {
    out.timestamps.assign(ds.timestamps.begin() + static_cast<std::ptrdiff_t>(begin),
                          ds.timestamps.begin() + static_cast<std::ptrdiff_t>(end));
  }
  out.feature_names = ds.feature_names;
  out.target_index = ds.target_index;
  return out;
}

Splits chrono_split(const Dataset& ds, std::array<double, 3> ratios, std::size_t min_rows) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r > 0.0)) throw ConfigError("split ratios must all be positive");
    total += r;
  }
  const std::size_t T = ds.rows();
  const auto n_train = static_cast<std::size_t>(std::llround(static_cast<double>(T) * ratios[0] / total));
  const auto n_val = static_cast<std::size_t>(std::llround(static_cast<double>(T) * ratios[1] / total));
  if (n_train + n_val >= T) throw ConfigError("dataset too short to split");
  const std::size_t n_test = T - n_train - n_val;
  if (std::min({n_train, n_val, n_test}) < std::max<std::size_t>(min_rows, 1)) {
    throw ConfigError("split too small: " + std::to_string(n_train) + "/" + std::to_string(n_val) + "/" +
                      std::to_string(n_test) + " rows, each part needs at least " + std::to_string(min_rows));
  }
  return {slice_rows(ds, 0, n_train), slice_rows(ds, n_train, n_train + n_val), slice_rows(ds, n_train + n_val, T),
          {n_train, n_train + n_val}};
}

Tensor Scaler::transform(const Tensor& x) const {
  const std::size_t D = mean.size();
  if (x.shape().back() != D) throw ShapeError("scaler: feature count mismatch");
  Tensor out = x;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - mean[i % D]) / std[i % D];
  return out;
}

Scaler fit_scaler(const Tensor& train, std::vector<std::string>* warnings) {
  const std::size_t T = train.dim(0), D = train.dim(1);
  Scaler s{std::vector<double>(D, 0.0), std::vector<double>(D, 0.0)};
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) s.mean[d] += train.at(t, d);
  for (double& m : s.mean) m /= static_cast<double>(T);
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t d = 0; d < D; ++d) s.std[d] += (train.at(t, d) - s.mean[d]) * (train.at(t, d) - s.mean[d]);
  for (std::size_t d = 0; d < D; ++d) {
    s.std[d] = std::sqrt(s.std[d] / static_cast<double>(T));
    if (s.std[d] == 0.0) {
      s.std[d] = 1.0;
      if (warnings) warnings->push_back("feature " + std::to_string(d) + " is constant on the train split");
    }
  }
  return s;
}

std::vector<std::string> standardize(Splits& splits, Scaler& scaler) {
  std::vector<std::string> warnings;
  scaler = fit_scaler(splits.train.values, &warnings);
  splits.train.values = scaler.transform(splits.train.values);
  splits.val.values = scaler.transform(splits.val.values);
  splits.test.values = scaler.transform(splits.test.values);
  return warnings;
}

std::size_t window_count(std::size_t rows, const WindowSpec& spec) {
  if (spec.input_len == 0 || spec.pred_len == 0 || spec.stride == 0) throw ConfigError("window sizes must be positive");
  if (rows < spec.input_len + spec.pred_len) return 0;
  return (rows - spec.input_len - spec.pred_len) / spec.stride + 1;
}

WindowSet make_windows(const Tensor& values, const WindowSpec& spec, std::size_t out_dim, std::size_t target) {
  const std::size_t T = values.dim(0), D = values.dim(1);
  const std::size_t n = window_count(T, spec);
  if (n == 0) {
    throw ConfigError("series of " + std::to_string(T) + " rows is shorter than one window (" +
                      std::to_string(spec.input_len + spec.pred_len) + ")");
  }
  if (out_dim != 1 && out_dim != D) throw ConfigError("out_dim must be 1 or the feature count");
  const std::size_t I = spec.input_len, O = spec.pred_len;
  WindowSet w{Tensor({n, I, D}), Tensor({n, O, out_dim})};
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t start = s * spec.stride;
    for (std::size_t t = 0; t < I; ++t)
      for (std::size_t d = 0; d < D; ++d) w.x.at(s, t, d) = values.at(start + t, d);
    for (std::size_t t = 0; t < O; ++t) {
      for (std::size_t d = 0; d < out_dim; ++d) {
        w.y.at(s, t, d) = values.at(start + I + t, out_dim == D ? d : target);
      }
    }
  }
  return w;
}

Tensor gather(const Tensor& t, std::span<const std::size_t> index) {
  Shape shape = t.shape();
  const std::size_t row = t.size() / shape[0];
  shape[0] = index.size();
  Tensor out(shape);
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::copy_n(t.data().begin() + static_cast<std::ptrdiff_t>(index[i] * row), row,
                out.data().begin() + static_cast<std::ptrdiff_t>(i * row));
  }
  return out;
}

Tensor batch_range(const Tensor& t, std::size_t begin, std::size_t end) {
  Shape shape = t.shape();
  const std::size_t row = t.size() / shape[0];
  shape[0] = end - begin;
  return Tensor(shape, std::vector<double>(t.data().begin() + static_cast<std::ptrdiff_t>(begin * row),
                                           t.data().begin() + static_cast<std::ptrdiff_t>(end * row)));
}

void validate(const DriftScript& script) {
  if (script.segments.empty()) throw ConfigError("drift script needs at least one segment");
  for (const DriftSegment& s : script.segments) {
    if (s.length == 0) throw ConfigError("drift segment lengths must be positive");
    if (!(s.noise_std >= 0.0)) throw ConfigError("drift segment noise_std must be nonnegative");
  }
  if (script.kind == DriftKind::Gradual) {
    if (script.blend_len == 0) throw ConfigError("gradual drift needs blend_len > 0");
    for (const DriftSegment& s : script.segments) {
      if (script.blend_len >= s.length) {
        throw ConfigError("blend_len " + std::to_string(script.blend_len) + " must be shorter than every segment");
      }
    }
  }
}

std::string hourly_timestamp(std::size_t index) {
  std::tm base{};
  base.tm_year = 2016 - 1900;
  base.tm_mon = 6;
  base.tm_mday = 1;
  const std::time_t start = timegm(&base);
  const std::time_t t = start + static_cast<std::time_t>(index) * 3600;
  std::tm out{};
  gmtime_r(&t, &out);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%d %H:%M:%S", &out);
  return buf;
}

SynthResult synth_drift(const DriftScript& script, std::size_t total_len, std::uint64_t seed) {
  validate(script);
  if (total_len == 0) throw ConfigError("synthetic length must be positive");
  std::vector<std::size_t> starts;
  std::size_t pos = 0;
  for (const DriftSegment& s : script.segments) {
    starts.push_back(pos);
    pos += s.length;
  }

  SynthResult res;
  for (std::size_t i = 1; i < starts.size(); ++i)
    if (starts[i] < total_len) res.drift_points.push_back(starts[i]);

  Rng rng(seed);
  Tensor values({total_len, 1});
  double phase = 0.0, level = 0.0;
  std::size_t seg = 0;
  for (std::size_t t = 0; t < total_len; ++t) {
    while (seg + 1 < starts.size() && t >= starts[seg + 1]) ++seg;
    DriftSegment p = script.segments[seg];
    if (script.kind == DriftKind::Gradual && seg > 0 && t < starts[seg] + script.blend_len) {
      const DriftSegment& prev = script.segments[seg - 1];
      const double a = static_cast<double>(t - starts[seg]) / static_cast<double>(script.blend_len);
      p.frequency = prev.frequency + a * (p.frequency - prev.frequency);
      p.amplitude = prev.amplitude + a * (p.amplitude - prev.amplitude);
      p.trend_slope = prev.trend_slope + a * (p.trend_slope - prev.trend_slope);
      p.noise_std = prev.noise_std + a * (p.noise_std - prev.noise_std);
    }
    const double noise = p.noise_std > 0.0 ? p.noise_std * rng.normal() : 0.0;
    values[t] = p.amplitude * std::sin(phase) + level + noise;
    phase += 2.0 * std::numbers::pi * p.frequency;
    level += p.trend_slope;
  }
  res.data.values = std::move(values);
  res.data.feature_names = {"value"};
  res.data.target_index = 0;
  res.data.timestamps.reserve(total_len);
  for (std::size_t t = 0; t < total_len; ++t) res.data.timestamps.push_back(hourly_timestamp(t));
  return res;
}

Metrics mse_mae(const Tensor& pred, const Tensor& target) {
  if (pred.shape() != target.shape()) {
    throw ShapeError("mse_mae: " + shape_string(pred.shape()) + " vs " + shape_string(target.shape()));
  }
  Metrics m;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = pred[i] - target[i];
    m.mse += e * e;
    m.mae += std::abs(e);
  }
  m.mse /= static_cast<double>(pred.size());
  m.mae /= static_cast<double>(pred.size());
  return m;
}

Tensor persistence_forecast(const WindowSet& windows, std::size_t target) {
  const std::size_t N = windows.x.dim(0), I = windows.x.dim(1), D = windows.x.dim(2);
  const std::size_t O = windows.y.dim(1), out_dim = windows.y.dim(2);
  Tensor out({N, O, out_dim});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t t = 0; t < O; ++t)
      for (std::size_t d = 0; d < out_dim; ++d) out.at(n, t, d) = windows.x.at(n, I - 1, out_dim == D ? d : target);
  return out;
}

}  // namespace mantra
