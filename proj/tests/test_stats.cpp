#include <doctest.h>

#include <sstream>
#include <vector>

#include "mantra/errors.hpp"
#include "mantra/stats.hpp"

using namespace mantra;

// Reference values computed once with scipy.stats (ttest_ind equal_var=False,
// t.ppf, t.cdf, beta.cdf).

TEST_CASE("improvement percentage") {
  CHECK(improvement_pct(1.168, 1.503) == doctest::Approx(22.288755821689954).epsilon(1e-12));
  CHECK(improvement_pct(1.168, 1.503) >= 22.24);
  CHECK(improvement_pct(1.168, 1.503) <= 22.34);
  CHECK(improvement_pct(0.7, 0.7) == 0.0);
  CHECK(improvement_pct(0.440, 0.442) == doctest::Approx(0.45).epsilon(0.05 / 0.45));
  CHECK(improvement_pct(2.0, 1.0) == -100.0);
  CHECK(improvement_pct(1.0, 2.0) == 50.0);
  CHECK_THROWS_AS(improvement_pct(1.0, 0.0), ConfigError);
}

TEST_CASE("incomplete beta and t distribution") {
  CHECK(incomplete_beta(0.3, 2.5, 4.0) == doctest::Approx(0.3521975859067672).epsilon(1e-12));
  CHECK(student_t_cdf(1.5, 3.3) == doctest::Approx(0.8887484016403541).epsilon(1e-12));
  CHECK(student_t_cdf(-0.7, 12) == doctest::Approx(0.2486370768953537).epsilon(1e-12));
  CHECK(student_t_cdf(0.0, 7) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(incomplete_beta(0.0, 2, 3) == 0.0);
  CHECK(incomplete_beta(1.0, 2, 3) == 1.0);
  // symmetry I_x(a, b) = 1 - I_{1-x}(b, a)
  CHECK(incomplete_beta(0.8, 3, 1.5) == doctest::Approx(1.0 - incomplete_beta(0.2, 1.5, 3)).epsilon(1e-13));
}

TEST_CASE("tabulated t critical values") {
  const std::vector<std::pair<double, double>> table = {{1, 6.313751514800932},
                                                        {2, 2.919985580355516},
                                                        {5, 2.0150483733330233},
                                                        {10, 1.8124611228107335},
                                                        {30, 1.6972608865939574}};
  for (auto [nu, crit] : table) {
    CAPTURE(nu);
    CHECK(std::abs(student_t_cdf(crit, nu) - 0.95) < 1e-10);
  }
}

TEST_CASE("welch t-test against reference values") {
  SUBCASE("shifted samples") {
    const std::vector<double> a = {1, 2, 3}, b = {101, 102, 103};
    const WelchResult r = welch_t_test(a, b);
    CHECK(r.t == doctest::Approx(-122.47448713915891).epsilon(1e-12));
    CHECK(r.dof == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(std::abs(r.p_value - 2.6654818961636016e-08) < 1e-6);
    CHECK(r.p_value == doctest::Approx(2.6654818961636016e-08).epsilon(1e-8));
    CHECK(r.p_value < 0.001);
    CHECK(r.significant);
  }
  SUBCASE("small gap, small spread") {
    const std::vector<double> a = {0.21, 0.22, 0.21}, b = {0.25, 0.26, 0.25};
    const WelchResult r = welch_t_test(a, b);
    CHECK(r.t == doctest::Approx(-8.485281374238564).epsilon(1e-9));
    CHECK(std::abs(r.p_value - 0.0010575646158306883) < 1e-6);
    CHECK(r.significant);
  }
  SUBCASE("unequal sizes and variances") {
    const std::vector<double> a = {1, 2, 4}, b = {2, 3.5, 5, 6};
    const WelchResult r = welch_t_test(a, b);
    CHECK(r.t == doctest::Approx(-1.4421737124469058).epsilon(1e-12));
    CHECK(r.dof == doctest::Approx(4.784633639869475).epsilon(1e-12));
    CHECK(std::abs(r.p_value - 0.21136138322107084) < 1e-10);
    CHECK_FALSE(r.significant);
  }
}

TEST_CASE("welch t-test properties") {
  const std::vector<double> a = {0.5, 0.7, 0.4, 0.9};
  const WelchResult same = welch_t_test(a, a);
  CHECK(same.t == 0.0);
  CHECK(same.p_value == doctest::Approx(1.0).epsilon(1e-12));

  const std::vector<double> b = {1.1, 0.8, 1.6};
  const WelchResult ab = welch_t_test(a, b), ba = welch_t_test(b, a);
  CHECK(ab.t == -ba.t);
  CHECK(ab.p_value == ba.p_value);

  double previous = 2.0;
  for (int step = 0; step <= 20; ++step) {
    std::vector<double> shifted = a;
    for (double& v : shifted) v += 0.05 * step;
    const double p = welch_t_test(a, shifted).p_value;
    CHECK(p <= previous);
    previous = p;
  }

  const std::vector<double> flat = {2.0, 2.0};
  const WelchResult degenerate = welch_t_test(flat, flat);
  CHECK(degenerate.degenerate);
  CHECK(degenerate.p_value == 1.0);
  const std::vector<double> other = {3.0, 3.0};
  CHECK_THROWS_AS(welch_t_test(flat, other), ConfigError);
  const std::vector<double> single = {1.0};
  CHECK_THROWS_AS(welch_t_test(single, a), ConfigError);
}

TEST_CASE("comparison csv") {
  ComparisonRow tested{"Exchange", 720, "mse", {1.1, 1.2, 1.204}, {1.5, 1.49, 1.519}};
  ComparisonRow single{"ETTm2", 96, "mae", {1.168}, {1.503}};
  const std::vector<ComparisonResult> rows = {compare_row(tested), compare_row(single)};
  CHECK(rows[0].tested);
  CHECK_FALSE(rows[1].tested);
  std::ostringstream out;
  write_comparison_csv(out, rows);
  std::istringstream in(out.str());
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  CHECK(header == "dataset,horizon,metric,ours,baseline,improvement_pct,p_value,significant");
  CHECK(first.rfind("Exchange,720,mse,", 0) == 0);
  CHECK(first.substr(first.size() - 4) == "true");
  CHECK(second.rfind("ETTm2,96,mae,1.168,1.503,22.2887558", 0) == 0);
  CHECK(second.substr(second.size() - 2) == ",,");
}
