#include <doctest.h>

#include <cmath>
#include <vector>

#include "fairgrade/rng.hpp"
#include "fairgrade/stats.hpp"

using namespace fairgrade;

TEST_CASE("mean and standard deviations") {
  std::vector<double> x = {1.0, 2.0, 3.0, 4.0};
  CHECK(stats::mean(x) == doctest::Approx(2.5));
  CHECK(stats::population_sd(x) == doctest::Approx(std::sqrt(1.25)));
  CHECK(stats::sample_sd(x) == doctest::Approx(std::sqrt(5.0 / 3.0)));
}

TEST_CASE("pearson basics") {
  std::vector<double> x = {1, 2, 3, 4, 5};
  std::vector<double> y = {2, 4, 6, 8, 10};
  CHECK(stats::pearson(x, y) == doctest::Approx(1.0));
  std::vector<double> ny = {10, 8, 6, 4, 2};
  CHECK(stats::pearson(x, ny) == doctest::Approx(-1.0));
  std::vector<double> c = {3, 3, 3, 3, 3};
  CHECK(std::isnan(stats::pearson(x, c)));
}

TEST_CASE("quantile_lower picks the order statistic at floor(q*n)") {
  std::vector<double> v = {5, 1, 3, 2, 4, 6};
  CHECK(stats::quantile_lower(v, 1.0 / 3.0) == 3.0);  // index 2 of sorted
  CHECK(stats::quantile_lower(v, 0.0) == 1.0);
  CHECK(stats::quantile_lower(v, 0.9999) == 6.0);
}

TEST_CASE("t distribution two-sided p matches reference values") {
  // Reference values computed with an independent statistics package.
  CHECK(stats::t_two_sided_p(2.0, 10.0) ==
        doctest::Approx(0.07338803477074039).epsilon(1e-10));
  CHECK(stats::t_two_sided_p(1.0, 5.0) ==
        doctest::Approx(0.36321746764912255).epsilon(1e-10));
  CHECK(stats::t_two_sided_p(2.5, 30.0) ==
        doctest::Approx(0.018115649068066706).epsilon(1e-10));
  CHECK(stats::t_two_sided_p(0.5, 3.0) ==
        doctest::Approx(0.651447964848151).epsilon(1e-10));
  CHECK(stats::t_two_sided_p(13.2, 497.5) ==
        doctest::Approx(2.540286659075177e-34).epsilon(1e-6));
}

TEST_CASE("welch t-test matches reference") {
  std::vector<double> a = {0.3, -0.1, 0.2, 0.4, 0.0, 0.1};
  std::vector<double> b = {-0.2, 0.1, -0.3, 0.0, -0.1};
  const auto res = stats::welch_t_test(a, b);
  CHECK(res.t == doctest::Approx(2.401922307076307).epsilon(1e-10));
  CHECK(res.p == doctest::Approx(0.03980308202413626).epsilon(1e-8));
  CHECK(res.significant);
}

TEST_CASE("pearson p-value matches reference") {
  std::vector<double> x, y;
  std::vector<double> noise = {0.1, -0.2, 0.3, 0,   0.1, -0.1,
                               0.2, -0.3, 0.1, 0.0, -0.1, 0.2};
  for (int i = 0; i < 12; ++i) {
    x.push_back(i);
    y.push_back(0.5 * i + noise[i]);
  }
  const double r = stats::pearson(x, y);
  CHECK(r == doctest::Approx(0.9952168100123084).epsilon(1e-12));
  CHECK(stats::pearson_p_value(r, 12) ==
        doctest::Approx(1.9560203694811638e-11).epsilon(1e-5));
}

TEST_CASE("rng is deterministic and moments look sane") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  Rng r(7);
  double sum = 0.0, sum2 = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    const double v = r.normal();
    sum += v;
    sum2 += v * v;
  }
  CHECK(sum / n == doctest::Approx(0.0).epsilon(0.05));
  CHECK(sum2 / n == doctest::Approx(1.0).epsilon(0.05));

  double psum = 0.0;
  for (int i = 0; i < n; ++i) psum += r.poisson(3.0);
  CHECK(psum / n == doctest::Approx(3.0).epsilon(0.05));
}
