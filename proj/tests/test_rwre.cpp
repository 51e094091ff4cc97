#include <cmath>
#include <filesystem>
#include <fstream>

#include "cmldiff/rwre.hpp"
#include "cmldiff/srb.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cmldiff;
using cmldiff::testing::random_energy;
using cmldiff::testing::random_theta;

namespace {

const LocalChaoticMap kMap{MapVariant::Doubling, 0.05};

EnvironmentKernel env_for(const Geometry& geo, const CurrentModel& model, std::uint64_t steps, std::uint64_t seed) {
  return generate_environment(random_theta(geo, 1, seed), kMap, model, steps, seed);
}

}  // namespace

TEST_CASE("linearization without noise is the hopping stencil") {
  for (int d : {1, 2}) {
    const Geometry geo(d, 6);
    const double a = 0.5 / (2 * d);
    const auto env = env_for(geo, {a, 0.0}, 3, 1);
    for (std::uint64_t t = 0; t < 3; ++t)
      for (std::size_t y = 0; y < geo.sites(); ++y) {
        CHECK(env.weight(t, y, 0, 0) == doctest::Approx(1 - 2 * d * a).epsilon(1e-15));
        for (int mu = 0; mu < d; ++mu) {
          CHECK(env.weight(t, y, mu, +1) == a);
          CHECK(env.weight(t, y, mu, -1) == a);
        }
      }
  }
}

TEST_CASE("linearization: exact columns and finite-difference agreement") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Geometry geo(1 + seed % 2, 5);
    const CurrentModel model{0.2 / geo.dim(), 0.04 / geo.dim(), seed % 3 ? NoiseKind::Cos : NoiseKind::Directed};
    const auto th = random_theta(geo, 1, seed);
    const std::vector<ThetaField> traj{th};
    const auto env = linearize_at_zero(traj, model);
    CHECK(env.max_column_sum_deviation() <= 1e-14);
    const double h = 1e-6;
    const auto fd = finite_difference_jacobian(th, model, std::vector<double>(geo.sites(), 0.0), h);
    const auto exact = DenseKernel::from_sparse(env.sparse_slice(0));
    CHECK(fd.max_abs_diff(exact) <= 10 * h);
  }
}

TEST_CASE("annealed kernel") {
  const Geometry geo(1, 16);
  SUBCASE("no noise gives the exact hopping kernel") {
    const auto est = annealed_kernel(geo, {0.25, 0.0}, kMap, 10, 64, 1);
    CHECK(est.kernel.values()[0] == 0.5);
    CHECK(est.kernel.at({1, 0, 0}) == 0.25);
    for (double e : est.std_error) CHECK(e == 0.0);
  }
  SUBCASE("mean-zero noise leaves T(+-1) = 1/4 within 3 sigma") {
    const auto est = annealed_kernel(geo, {0.25, 1.0 / 16}, {MapVariant::Doubling, 0.0}, 2000, 64, 2);
    CHECK(std::abs(est.raw_stencil[1] - 0.25) <= 3 * est.std_error[1]);
    CHECK(std::abs(est.raw_stencil[2] - 0.25) <= 3 * est.std_error[2]);
    CHECK(std::abs(compensated_total(est.kernel.values()) - 1.0) <= 1e-15);
    CHECK_FALSE(est.symmetry_warning);
  }
  SUBCASE("a directed observable triggers the symmetry warning") {
    const auto est = annealed_kernel(geo, {0.25, 1.0 / 16, NoiseKind::Directed}, kMap, 400, 64, 3);
    CHECK(est.symmetry_warning);
    CHECK(est.kernel.asymmetry() < 1e-15);
  }
}

TEST_CASE("fluctuation split") {
  const Geometry geo(1, 12);
  SUBCASE("deterministic environment has no fluctuation") {
    const auto env = env_for(geo, {0.25, 0.0}, 4, 1);
    const auto f = fluctuation_split(env, TranslationKernel::hopping(geo, 0.25));
    for (std::uint64_t t = 0; t < 4; ++t) {
      for (double v : f.delta_slice(t)) CHECK(v == 0.0);
      const auto b = f.bond_sparse(t);
      for (std::size_t y = 0; y < 12; ++y)
        for (auto e : b.column(y)) CHECK(e.value == 0.0);
    }
  }
  SUBCASE("columns of delta sum to zero and the bond field reproduces delta") {
    const CurrentModel model{0.25, 1.0 / 16};
    const auto env = env_for(geo, model, 6, 2);
    const auto T = annealed_kernel(geo, model, kMap, 50, 64, 5).kernel;
    const auto f = fluctuation_split(env, T);
    for (std::uint64_t t = 0; t < 6; ++t) CHECK(f.delta_sparse(t).column_sum_deviation(0.0) <= 1e-15);
    CHECK(f.bond_reconstruction_error() <= 1e-16);
  }
  SUBCASE("no bond field in d = 2") {
    const Geometry g2(2, 6);
    const auto f = fluctuation_split(env_for(g2, {0.125, 0.02}, 2, 3), TranslationKernel::hopping(g2, 0.125));
    CHECK_FALSE(f.has_bonds());
    CHECK_THROWS_AS(f.bond_sparse(0), std::logic_error);
  }
}

TEST_CASE("ensemble mean of delta vanishes within 4 standard errors") {
  const Geometry geo(1, 8);
  const CurrentModel model{0.25, 1.0 / 16};
  const auto T = annealed_kernel(geo, model, kMap, 10000, 64, 100);
  const SRBSampler sampler{geo, kMap, 64, 200};
  const std::size_t n = 10000;
  const auto samples = sample_srb(sampler, n);
  const int w = stencil_width(1);
  std::vector<double> tst(w);
  tst[0] = T.kernel.values()[0];
  tst[1] = T.kernel.at({1, 0, 0});
  tst[2] = T.kernel.at({-1, 0, 0});
  // entries of delta_0(., y) at y = 0 and y = 3
  for (std::size_t y : {std::size_t{0}, std::size_t{3}}) {
    for (int s = 0; s < w; ++s) {
      double sum = 0, sum2 = 0;
      for (const auto& th : samples) {
        const std::vector<ThetaField> traj{th};
        const double v = linearize_at_zero(traj, model).slice(0)[y * w + s] - tst[s];
        sum += v;
        sum2 += v * v;
      }
      const double m = sum / n;
      const double se = std::sqrt((sum2 / n - m * m) / n);
      const double se_T = *std::max_element(T.std_error.begin(), T.std_error.end()) * 2;
      CHECK(std::abs(m) <= 4 * std::hypot(se, se_T));
    }
  }
}

TEST_CASE("quenched evolution") {
  const Geometry geo(1, 20);
  SUBCASE("no noise equals t-fold convolution") {
    const auto env = env_for(geo, {0.25, 0.0}, 9, 1);
    const auto E0 = random_energy(geo, 3);
    const auto E = quenched_evolve(E0, env, 9);
    std::vector<double> ref(E0.values().begin(), E0.values().end());
    const auto T = TranslationKernel::hopping(geo, 0.25);
    for (int t = 0; t < 9; ++t) ref = circular_convolve(geo, T.values(), ref);
    for (int x = 0; x < 20; ++x) CHECK(E[x] == doctest::Approx(ref[x]).epsilon(1e-12));
  }
  SUBCASE("one step of a spike is a column, mass is preserved") {
    const CurrentModel model{0.25, 1.0 / 16};
    const auto env = env_for(geo, model, 30, 4);
    const auto one = quenched_evolve(EnergyField::spike(geo, 7, 1.0), env, 1);
    const auto p0 = env.sparse_slice(0);
    for (auto e : p0.column(7)) CHECK(one[e.row] == e.value);
    const auto E0 = random_energy(geo, 5);
    for (std::uint64_t t : {1, 10, 30})
      CHECK(std::abs(quenched_evolve(E0, env, t).mass() - E0.mass()) <= 1e-14 * E0.mass());
    CHECK_THROWS_AS(quenched_evolve(E0, env, 31), std::out_of_range);
  }
  SUBCASE("agrees with the full dynamics to second order in the mass") {
    const CurrentModel model{0.25, 1.0 / 16};
    const auto th = random_theta(geo, 1, 8);
    const std::vector<ThetaField> traj{th};
    const auto env = linearize_at_zero(traj, model);
    for (double eta : {1e-2, 1e-4}) {
      const auto E0 = random_energy(geo, 9, eta);
      const auto lin = quenched_evolve(E0, env, 1);
      const auto full = step_energy(E0, th, model);
      for (int x = 0; x < 20; ++x) CHECK(std::abs(lin[x] - full[x]) <= eta * eta);
    }
  }
}

TEST_CASE("assumption validators: default model passes, broken models fail their target") {
  ValidationOptions opt;
  opt.geo = Geometry(1, 32);
  opt.n_samples = 200;
  const auto ok = validate_assumptions({0.25, 1.0 / 16}, kMap, opt);
  for (const auto& c : ok.checks) CHECK_MESSAGE(c.passed, c.name << ": " << c.detail);

  const auto noiseless = validate_assumptions({0.25, 0.0}, kMap, opt);
  CHECK(noiseless.all_passed());

  const auto pos = validate_assumptions({0.45, 0.1}, kMap, opt);
  CHECK(pos.failed() == std::vector<std::string>{"positivity"});
  CHECK(pos.checks[0].detail.find("spike") != std::string::npos);

  const auto dir = validate_assumptions({0.25, 1.0 / 16, NoiseKind::Directed}, kMap, opt);
  CHECK(dir.failed() == std::vector<std::string>{"symmetry"});

  const auto id = validate_assumptions({0.0, 0.0}, kMap, opt);
  CHECK(id.failed() == std::vector<std::string>{"aperiodicity"});

  ValidationOptions opt2 = opt;
  opt2.geo = Geometry(2, 8);
  CHECK(validate_assumptions({0.125, 1.0 / 32}, kMap, opt2).all_passed());
}

TEST_CASE("annealed current") {
  const Geometry geo(1, 16);
  SUBCASE("constant profile carries no current") {
    const auto ad = annealed_current({0.25, 1.0 / 16}, kMap, EnergyField::constant(geo, 2.0), 100, 64, 1);
    for (std::size_t k = 0; k < ad.current.size(); ++k) CHECK(std::abs(ad.current[k]) <= 3 * ad.current_stderr[k] + 1e-15);
    CHECK_FALSE(ad.fit_ok);
  }
  SUBCASE("no noise, linear ramp: conductivity equals a") {
    std::vector<double> ramp(16);
    for (int x = 0; x < 16; ++x) ramp[x] = 1.0 + x;
    const auto ad = annealed_current({0.25, 0.0}, kMap, EnergyField(geo, ramp), 4, 64, 1);
    REQUIRE(ad.fit_ok);
    CHECK(ad.conductivity[0] == doctest::Approx(0.25).epsilon(1e-12));
  }
  SUBCASE("default parameters: positive conductivity, near-identity in d = 2") {
    const Geometry g2(2, 8);
    const auto E = random_energy(g2, 4);
    std::vector<double> v(E.values().begin(), E.values().end());
    for (double& x : v) x = 1.0 + x;
    const auto ad = annealed_current({0.125, 1.0 / 32}, kMap, EnergyField(g2, v), 400, 64, 2);
    REQUIRE(ad.fit_ok);
    CHECK(ad.conductivity[0] > 0);
    CHECK(ad.conductivity[3] > 0);
    CHECK(std::abs(ad.conductivity[1]) <= 4 * ad.conductivity_stderr[1] + 1e-12);
    CHECK(std::abs(ad.conductivity[0] - ad.conductivity[3]) <= 4 * std::hypot(ad.conductivity_stderr[0], ad.conductivity_stderr[3]) + 1e-12);
  }
}

TEST_CASE("environment file round trip") {
  const Geometry geo(2, 5);
  const auto env = env_for(geo, {0.125, 0.02}, 3, 11);
  const auto path = std::filesystem::temp_directory_path() / "cmldiff_env_test.bin";
  save_environment(path, env);
  CHECK(std::filesystem::file_size(path) == 8 + 4 * 3 + 8 + 24 + 12 + 8 + 4 + 3 * 25 * 5 * 8);
  const auto back = load_environment(path);
  CHECK(back.geometry() == geo);
  CHECK(back.t_max() == 3);
  CHECK(back.info().model.eps_prime == 0.02);
  CHECK(back.info().seed == 11);
  CHECK(std::equal(env.data().begin(), env.data().end(), back.data().begin()));
  {
    std::ofstream bad(path, std::ios::binary);
    bad << "NOTANENV";
  }
  CHECK_THROWS(load_environment(path));
  std::filesystem::remove(path);
}
