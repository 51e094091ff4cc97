#include <cmath>

#include "cmldiff/rng.hpp"
#include "cmldiff/srb.hpp"
#include "doctest.h"

using namespace cmldiff;

namespace {

SRBSampler doubling(int M, double kappa, std::uint64_t seed = 1) {
  return SRBSampler{Geometry(1, M), LocalChaoticMap{MapVariant::Doubling, kappa}, 64, seed};
}

// mean and standard error of F over all sites of all samples
std::pair<double, double> site_mean(const std::vector<ThetaField>& samples, const Observable& F) {
  double s = 0, s2 = 0, n = 0;
  for (const auto& th : samples)
    for (std::size_t x = 0; x < th.geometry().sites(); ++x) {
      const double v = F(th.site(x));
      s += v;
      s2 += v * v;
      n += 1;
    }
  const double m = s / n;
  return {m, std::sqrt((s2 / n - m * m) / n)};
}

}  // namespace

TEST_CASE("Lebesgue is invariant for the uncoupled doubling map") {
  const auto samples = sample_srb(doubling(64, 0.0), 400);
  const auto [m, se] = site_mean(samples, cos_observable());
  CHECK(std::abs(m) <= 4 * se);
}

TEST_CASE("uncoupled cat map marginals pass Kolmogorov-Smirnov") {
  const SRBSampler s{Geometry(2, 8), LocalChaoticMap{MapVariant::Cat, 0.0}, 64, 3};
  const auto samples = sample_srb(s, 40);
  for (int c = 0; c < 2; ++c) {
    std::vector<double> v;
    for (const auto& th : samples)
      for (std::size_t x = 0; x < th.geometry().sites(); ++x) v.push_back(th.site(x)[c]);
    CHECK(ks_uniform(v).p_value > 0.01);
  }
}

TEST_CASE("Kolmogorov-Smirnov rejects a skewed sample") {
  Rng rng(1);
  std::vector<double> v(2000);
  for (double& x : v) x = std::pow(rng.uniform(), 1.3);
  CHECK(ks_uniform(v).p_value < 1e-6);
}

TEST_CASE("burn-in zero returns the raw draw; sampling is seed-deterministic") {
  auto s = doubling(16, 0.05);
  s.burn_in = 0;
  const auto raw = s.sample(5);
  const auto init = s.initial(5);
  CHECK(std::equal(raw.values().begin(), raw.values().end(), init.values().begin()));

  const auto a = sample_srb(doubling(16, 0.05, 9), 6);
  const auto b = sample_srb(doubling(16, 0.05, 9), 6);
  const auto c = sample_srb(doubling(16, 0.05, 10), 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::equal(a[i].values().begin(), a[i].values().end(), b[i].values().begin()));
    CHECK_FALSE(std::equal(a[i].values().begin(), a[i].values().end(), c[i].values().begin()));
  }
}

TEST_CASE("stationarity after burn-in") {
  auto s = doubling(32, 0.05);
  const auto at_B = sample_srb(s, 300);
  s.burn_in = 128;
  const auto at_2B = sample_srb(s, 300, 1000);
  for (const auto& F : {cos_observable(), sawtooth_observable()}) {
    const auto [m1, e1] = site_mean(at_B, F);
    const auto [m2, e2] = site_mean(at_2B, F);
    CHECK(std::abs(m1 - m2) <= 4 * std::hypot(e1, e2));
  }
}

TEST_CASE("uncoupled doubling: time-lag covariance of cos vanishes") {
  const auto est = time_correlations(doubling(128, 0.0), cos_observable(), cos_observable(),
                                     {1, 2, 3, 4, 5, 6, 7, 8}, 4096);
  for (const auto& e : est) {
    CHECK(e.std_error > 0);
    CHECK(std::abs(e.covariance) <= 4 * e.std_error);
  }
  CHECK_THROWS_AS(time_correlations(doubling(8, 0.0), cos_observable(), cos_observable(), {8}, 8), std::invalid_argument);
}

TEST_CASE("uncoupled sites are independent in space") {
  const auto est = space_correlations(doubling(64, 0.0), cos_observable(), sawtooth_observable(), {1, 2, 5}, 200);
  for (const auto& e : est) CHECK(std::abs(e.covariance) <= 4 * e.std_error);
}

TEST_CASE("sawtooth covariance under doubling is 2^-t / 12") {
  const auto est = time_correlations(doubling(128, 0.0), sawtooth_observable(), sawtooth_observable(), {1, 2, 3},
                                     8192);
  for (const auto& e : est) CHECK(std::abs(e.covariance - std::ldexp(1.0 / 12, -e.separation)) <= 4 * e.std_error);
}

TEST_CASE("coupled doubling: positive correlation decay rate") {
  const auto dec = time_correlation_decay(doubling(128, 0.05), sawtooth_observable(), {1, 2, 3, 4, 5, 6, 7, 8}, 8192);
  CHECK(dec.fit.m > 0);
  CHECK(dec.fit.m - 2 * dec.m_stderr > 0);
}

TEST_CASE("product bound: independence and consistency with the covariance") {
  const auto rep = product_bound_check(doubling(64, 0.0), {position_observable(), raised_cos_observable(),
                                                          position_observable()},
                                       3, 300, Placement::Space);
  CHECK(std::abs(rep.ratio - 1.0) <= 4 * rep.ratio_stderr);

  const auto s = doubling(64, 0.0);
  const auto pair = product_bound_check(s, {position_observable(), position_observable()}, 2, 8192, Placement::Time);
  const auto cov = time_correlations(s, position_observable(), position_observable(), {2}, 8192 + 2);
  // k = 2: E[F1 F2] / (E F1 E F2) - 1 is the normalized covariance
  CHECK(pair.ratio - 1.0 == doctest::Approx(cov[0].covariance / (cov[0].mean1 * cov[0].mean2)).epsilon(0.05));
  CHECK_THROWS_AS(product_bound_check(s, {cos_observable()}, 1, 10, Placement::Space), std::invalid_argument);
}

TEST_CASE("coupled doubling: minimal product-bound slack decreases with separation") {
  const auto s = doubling(128, 0.05);
  double prev = INFINITY;
  for (int R : {2, 4, 8}) {
    const auto rep = product_bound_check(s, {position_observable(), position_observable()}, R, 8192, Placement::Time);
    CHECK(rep.min_slack < prev);
    prev = rep.min_slack;
  }
}
