#include <cmath>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "cmldiff/verify.hpp"
#include "doctest.h"

using namespace cmldiff;

namespace {

ScalingLimitConfig hopping_config() {
  ScalingLimitConfig c;
  c.geo = Geometry(1, 80);
  c.model = CurrentModel{0.25, 0.0};
  c.map = LocalChaoticMap{MapVariant::Doubling, 0.0};
  c.L = 2;
  c.n_max = 3;
  c.seeds = 2;
  c.burn_in = 8;
  return c;
}

double find(const WeakDistanceReport& r, std::uint64_t seed, int n, const std::string& g) {
  for (const auto& row : r.rows)
    if (row.seed == seed && row.n == n && row.function == g) return row.value;
  throw std::runtime_error("row not found");
}

}  // namespace

TEST_CASE("gaussian_eval: closed form, symmetry, normalization, errors") {
  CHECK(gaussian_eval({1, 0.5}, {0, 0, 0}) == doctest::Approx(1.0 / std::sqrt(std::numbers::pi)).epsilon(1e-14));
  CHECK(gaussian_eval({1, 0.5}, {0, 0, 0}) == doctest::Approx(0.56419).epsilon(1e-5));
  CHECK(gaussian_eval({2, 0.7}, {0.3, -1.1, 0}) == gaussian_eval({2, 0.7}, {-0.3, 1.1, 0}));

  for (int d : {1, 2}) {
    const double D = 0.5;
    const double half = 6.0 * std::sqrt(D / d);
    const double h = d == 1 ? 1e-3 : 1e-2;
    const int n = static_cast<int>(std::round(2 * half / h));
    double total = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < (d == 2 ? n : 1); ++j) {
        const double x = -half + (i + 0.5) * h;
        const double y = d == 2 ? -half + (j + 0.5) * h : 0.0;
        total += gaussian_eval({d, D}, {x, y, 0}) * std::pow(h, d);
      }
    CHECK(std::abs(total - 1.0) <= 1e-6);
  }
  CHECK_THROWS_AS(gaussian_eval({1, 0.0}, {0, 0, 0}), std::invalid_argument);
  CHECK_THROWS_AS(gaussian_eval({1, -1.0}, {0, 0, 0}), std::invalid_argument);
}

TEST_CASE("default test functions carry finite sup norms") {
  for (int d : {1, 2}) {
    const auto G = default_test_functions(d);
    REQUIRE(G.size() == 5);
    for (const auto& g : G) {
      CHECK(std::isfinite(g.sup));
      CHECK(std::isfinite(g.grad_sup));
      CHECK(g.sup <= 1.0 + 1e-15);
    }
    CHECK(G[0].grad_sup == 0.0);
    CHECK(G[1].grad_sup == doctest::Approx(std::sqrt(2.0) * std::exp(-0.5)).epsilon(1e-4));
  }
}

TEST_CASE("weak distance: constant G sees only mass, cos G separates uniform from Gaussian") {
  const Geometry geo(1, 256);
  const double h = 1.0 / 16;
  const GaussianFixedPoint g{1, 0.5};
  const auto G = default_test_functions(1);
  std::vector<double> uniform(geo.sites(), 1.0 / geo.sites());
  CHECK(std::abs(weak_distance(G[0], g, geo, uniform, h, 0, 1.0)) <= 1e-12);
  CHECK(std::abs(weak_distance(G[2], g, geo, uniform, h, 0, 1.0)) > 0.1);

  std::vector<double> gauss(geo.sites());
  for (std::size_t z = 0; z < geo.sites(); ++z) gauss[z] = h * gaussian_eval(g, {h * geo.min_image(static_cast<int>(z)), 0, 0});
  for (const auto& f : G) CHECK(std::abs(weak_distance(f, g, geo, gauss, h, 0, 1.0)) <= 1e-15);
}

TEST_CASE("strictly_decreasing with a floor") {
  CHECK(strictly_decreasing({3, 2, 1}, 0.0));
  CHECK_FALSE(strictly_decreasing({3, 3, 1}, 0.0));
  CHECK(strictly_decreasing({1e-13, 2e-13, 1e-14}, 1e-10));
  CHECK_FALSE(strictly_decreasing({1e-13, 1e-3}, 1e-10));
}

TEST_CASE("eps'=0 spike: mass term vanishes, distances shrink, oracle agrees") {
  const auto c = hopping_config();
  const auto E0 = EnergyField::spike(c.geo, 0, 1.0);
  const auto r = scaling_limit_test(E0, c, default_test_functions(1));
  CHECK(r.complete);
  CHECK(r.rows.size() == 2 * 3 * 5);
  // The six-sigma box cuts a Gaussian tail of order 1e-9.
  CHECK(std::abs(r.D_hat.D - 0.5) <= 1e-6);
  for (int n = 1; n <= 3; ++n) CHECK(std::abs(find(r, 0, n, "one")) <= 1e-8);
  CHECK(std::abs(find(r, 0, 3, "gauss")) * 2.0 <= std::abs(find(r, 0, 1, "gauss")));
  REQUIRE(r.oracle.size() == 5);
  for (std::size_t g = 0; g < 5; ++g)
    for (int n = 0; n < 3; ++n) CHECK(std::abs(r.medians[g][n] - r.oracle[g][n]) <= 1e-12);
  for (bool dec : r.median_decreasing) CHECK(dec);
  REQUIRE(r.warnings.size() == 1);
}

TEST_CASE("report is invariant under translating E0 together with the centre") {
  auto c = hopping_config();
  c.seeds = 1;
  const auto a = scaling_limit_test(EnergyField::spike(c.geo, 0, 1.0), c, default_test_functions(1));
  c.center = 17;
  const auto b = scaling_limit_test(EnergyField::spike(c.geo, 17, 1.0), c, default_test_functions(1));
  REQUIRE(a.rows.size() == b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) CHECK(std::abs(a.rows[i].value - b.rows[i].value) <= 1e-14);
}

TEST_CASE("scaling_limit_test errors") {
  auto c = hopping_config();
  c.geo = Geometry(1, 64);
  CHECK_THROWS_AS(scaling_limit_test(EnergyField::spike(c.geo, 0, 1.0), c, default_test_functions(1)),
                  std::invalid_argument);
  c = hopping_config();
  CHECK_THROWS_AS(scaling_limit_test(EnergyField::spike(c.geo, 0, 2.0), c, default_test_functions(1)),
                  std::invalid_argument);
  CHECK_THROWS_AS(scaling_limit_test(EnergyField::spike(c.geo, 0, 1.0), c, {}), std::invalid_argument);
}

TEST_CASE("noisy run and exports") {
  ScalingLimitConfig c;
  c.geo = Geometry(1, 80);
  c.L = 2;
  c.n_max = 3;
  c.seeds = 3;
  c.burn_in = 16;
  const auto r = scaling_limit_test(EnergyField::spike(c.geo, 0, 1.0), c, default_test_functions(1));
  CHECK(r.seed_D.size() == 3);
  for (double D : r.seed_D) CHECK((D > 0.25 && D < 1.0));
  for (double f : r.trend_fraction) CHECK((f >= 0.0 && f <= 1.0));
  CHECK(r.oracle.empty());

  std::ostringstream js, cs;
  write_report_json(js, r);
  write_report_csv(cs, r);
  const auto j = nlohmann::json::parse(js.str());
  CHECK(j["schema_version"] == 1);
  CHECK(j["test_functions"].size() == 5);
  const std::string csv = cs.str();
  CHECK(csv.rfind("seed,n,G,value,distance\r\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 3 * 3 * 5);
}
