#include "mantra/stats.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>

#include "mantra/errors.hpp"

namespace mantra {

namespace {

// Lentz continued fraction for I_x(a, b); converges for x < (a + 1) / (a + b + 2).
double beta_fraction(double x, double a, double b) {
  constexpr double kTiny = 1e-300;
  constexpr double kEps = 1e-16;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double num = m * (b - m) * x / ((a + m2 - 1.0) * (a + m2));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    num = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;  // unbiased
  double n = 0.0;
};

Moments moments(std::span<const double> xs, const char* which) {
  if (xs.size() < 2) throw ConfigError(std::string("t-test sample '") + which + "' needs at least two runs");
  for (double v : xs) {
    if (!std::isfinite(v)) throw ConfigError(std::string("t-test sample '") + which + "' has a non-finite value");
  }
  Moments m;
  m.n = static_cast<double>(xs.size());
  m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / m.n;
  double ss = 0.0;
  for (double v : xs) ss += (v - m.mean) * (v - m.mean);
  m.var = ss / (m.n - 1.0);
  return m;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) throw ConfigError("comparison entry has no values");
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

double improvement_pct(double ours, double baseline) {
  if (baseline == 0.0) throw ConfigError("improvement_pct: baseline is zero");
  return 100.0 * (baseline - ours) / baseline;
}

double incomplete_beta(double x, double a, double b) {
  if (!(a > 0.0) || !(b > 0.0)) throw ConfigError("incomplete_beta: a and b must be positive");
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double log_front =
      std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(log_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_fraction(x, a, b) / a;
  return 1.0 - front * beta_fraction(1.0 - x, b, a) / b;
}

double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw ConfigError("student_t_cdf: dof must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double x = dof / (dof + t * t);
  const double tail = 0.5 * incomplete_beta(x, 0.5 * dof, 0.5);
  return t > 0 ? 1.0 - tail : tail;
}

WelchResult welch_t_test(std::span<const double> a, std::span<const double> b) {
  const Moments ma = moments(a, "a");
  const Moments mb = moments(b, "b");
  WelchResult r;
  const double sa = ma.var / ma.n;
  const double sb = mb.var / mb.n;
  const double se2 = sa + sb;
  if (se2 == 0.0) {
    if (ma.mean != mb.mean) throw ConfigError("t-test: both samples have zero variance and different means");
    r.degenerate = true;
    r.dof = ma.n + mb.n - 2.0;
    return r;
  }
  r.t = (ma.mean - mb.mean) / std::sqrt(se2);
  r.dof = se2 * se2 / (sa * sa / (ma.n - 1.0) + sb * sb / (mb.n - 1.0));
  r.p_value = std::min(1.0, 2.0 * student_t_cdf(-std::fabs(r.t), r.dof));
  r.significant = r.p_value < kSignificanceLevel;
  return r;
}

ComparisonResult compare_row(const ComparisonRow& row) {
  ComparisonResult out;
  out.row = row;
  out.ours_mean = mean_of(row.ours);
  out.baseline_mean = mean_of(row.baseline);
  out.improvement = improvement_pct(out.ours_mean, out.baseline_mean);
  if (row.ours.size() >= 2 && row.baseline.size() >= 2) {
    out.tested = true;
    out.welch = welch_t_test(row.ours, row.baseline);
  }
  return out;
}

void write_comparison_csv(std::ostream& out, std::span<const ComparisonResult> rows) {
  out << "dataset,horizon,metric,ours,baseline,improvement_pct,p_value,significant\n";
  out << std::setprecision(10);
  for (const ComparisonResult& r : rows) {
    out << r.row.dataset << ',' << r.row.horizon << ',' << r.row.metric << ',' << r.ours_mean << ','
        << r.baseline_mean << ',' << r.improvement << ',';
    if (r.tested) out << r.welch.p_value << ',' << (r.welch.significant ? "true" : "false");
    else out << ',';
    out << '\n';
  }
}

}  // namespace mantra
