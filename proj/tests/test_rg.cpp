#include <cmath>
#include <numbers>

#include "cmldiff/rg.hpp"
#include "cmldiff/rng.hpp"
#include "cmldiff/srb.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace cmldiff;

namespace {

// Direct O(N^2) periodic convolution, independent of the transform.
std::vector<double> convolve_direct(const Geometry& geo, const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> out(geo.sites(), 0.0);
  for (std::size_t x = 0; x < geo.sites(); ++x)
    for (std::size_t y = 0; y < geo.sites(); ++y) {
      Coord cx = geo.coords(x), cy = geo.coords(y);
      Coord diff{0, 0, 0};
      for (int i = 0; i < geo.dim(); ++i) diff[i] = cx[i] - cy[i];
      out[x] += a[geo.index(diff)] * b[y];
    }
  return out;
}

std::vector<double> power_direct(const TranslationKernel& T, int j) {
  const Geometry& geo = T.geometry();
  std::vector<double> p(geo.sites(), 0.0);
  p[0] = 1.0;
  const std::vector<double> t(T.values().begin(), T.values().end());
  for (int i = 0; i < j; ++i) p = convolve_direct(geo, t, p);
  return p;
}

std::vector<SparseKernel> random_window(const Geometry& geo, int L, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<SparseKernel> w;
  for (int i = 0; i < L * L; ++i) {
    std::vector<SparseKernel::Triplet> tr;
    for (std::size_t y = 0; y < geo.sites(); ++y) {
      tr.push_back({y, y, rng.normal()});
      for (int mu = 0; mu < geo.dim(); ++mu)
        for (int s : {+1, -1}) tr.push_back({geo.neighbor(y, mu, s), y, rng.normal()});
    }
    w.push_back(SparseKernel::from_triplets(geo, tr));
  }
  return w;
}

}  // namespace

TEST_CASE("scale_field: identity, mass, spike, divisibility") {
  const Geometry geo(1, 32);
  const auto E = ScaledField::from_energy(testing::random_energy(geo, 3));
  const auto same = scale_field(E, 1);
  CHECK(same.values == E.values);
  CHECK(same.grid_factor == 1);

  const auto S = scale_field(E, 2);
  CHECK(S.grid_factor == 2);
  CHECK(S.n == 1);
  CHECK(std::abs(S.mass() - E.mass()) <= 1e-12 * E.mass());
  for (std::size_t i = 0; i < geo.sites(); ++i) CHECK(S.values[i] == 2.0 * E.values[i]);

  const auto spike = ScaledField::from_energy(EnergyField::spike(Geometry(2, 8), 0, 1.0));
  const auto s2 = scale_field(scale_field(spike, 2), 2);
  CHECK(s2.values[0] == 16.0 * 16.0 / 16.0 * 16.0 / 16.0);
  CHECK(std::abs(s2.mass() - 1.0) <= 1e-15);
  for (std::size_t i = 1; i < s2.values.size(); ++i) CHECK(s2.values[i] == 0.0);

  CHECK_THROWS_AS(scale_field(ScaledField::from_energy(EnergyField::constant(Geometry(1, 6), 1.0)), 4),
                  std::invalid_argument);
}

TEST_CASE("min_box_side for the default d=1 flow") {
  CHECK(min_box_side(1, 4, 3, CurrentModel{0.25, 1.0 / 16}) == 640);
  CHECK(min_box_side(1, 2, 2, CurrentModel{0.25, 1.0 / 16}) == 40);
  CHECK(min_box_side(1, 2, 5, CurrentModel{0.25, 0.0}) % 32 == 0);
}

TEST_CASE("diffusion constants of the reference kernels") {
  CHECK(diffusion_constant(TranslationKernel::hopping(Geometry(1, 16), 0.25)) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(diffusion_constant(TranslationKernel::hopping(Geometry(2, 16), 0.125)) == doctest::Approx(0.5).epsilon(1e-15));
  std::vector<double> delta(16, 0.0);
  delta[0] = 1.0;
  CHECK(diffusion_constant(TranslationKernel(Geometry(1, 16), delta)) == 0.0);
}

TEST_CASE("pure flow of the d=1 hopping kernel matches cos^(2 4^n)(k / 2^(n+1))") {
  const int n = 5;
  const Geometry geo(1, 288);
  const auto T = TranslationKernel::hopping(geo, 0.25);
  const auto flow = pure_T_flow(T, 2, n);
  REQUIRE(flow.size() == 5);
  const auto& K = flow.back();
  CHECK(K.aperiodic);
  CHECK(K.D0 == doctest::Approx(0.5));
  for (std::size_t j = 0; j < geo.sites(); ++j) {
    const double kl = 2.0 * std::numbers::pi * geo.min_image(static_cast<int>(j)) / geo.side();
    const double closed = std::pow(std::cos(kl / 2.0), 2.0 * std::pow(4.0, n));
    CHECK(std::abs(K.hat[j] - closed) <= 1e-12);
  }
  double sup = 0.0;
  for (int i = 0; i <= 4000; ++i) {
    const double k = -std::numbers::pi + 2.0 * std::numbers::pi * i / 4000;
    sup = std::max(sup, std::abs(std::pow(std::cos(k / 64.0), 2048.0) - std::exp(-k * k / 4.0)));
  }
  CHECK(sup <= 1e-3);
  const double cont = gaussian_band_distance(T, 2, n, std::numbers::pi);
  CHECK(cont <= 1e-3);
  CHECK(std::abs(cont - sup) <= 1e-6);
  CHECK(K.grid_band_distance <= cont + 1e-12);
  for (std::size_t i = 0; i < geo.sites(); ++i) CHECK(K.prob[i] >= -1e-15);
}

TEST_CASE("pure flow position kernel equals repeated convolution") {
  const Geometry geo(1, 16);
  const auto T = TranslationKernel::hopping(geo, 0.2);
  const auto flow = pure_T_flow(T, 2, 1);
  const auto direct = power_direct(T, 4);
  for (std::size_t i = 0; i < geo.sites(); ++i) CHECK(std::abs(flow[0].prob[i] - direct[i]) <= 1e-12);
  const auto back = fft_forward(geo, flow[0].prob);
  for (std::size_t i = 0; i < geo.sites(); ++i) CHECK(std::abs(back[i] - flow[0].hat[i]) <= 1e-12);
}

TEST_CASE("pure flow flags a periodic kernel") {
  const Geometry geo(1, 16);
  std::vector<double> v(16, 0.0);
  v[1] = v[15] = 0.5;
  const auto flow = pure_T_flow(TranslationKernel(geo, v), 2, 1);
  CHECK_FALSE(flow[0].aperiodic);
  CHECK(pure_T_flow(TranslationKernel::hopping(geo, 0.25), 2, 1)[0].aperiodic);
}

TEST_CASE("Gaussian distance of the default kernel does not increase over n = 1..5") {
  for (int d : {1, 2}) {
    const auto T = TranslationKernel::hopping(Geometry(d, 16), d == 1 ? 0.25 : 0.125);
    double prev = std::numeric_limits<double>::infinity();
    for (int n = 1; n <= 5; ++n) {
      const double g = gaussian_band_distance(T, 2, n, std::numbers::pi, d == 1 ? 2049 : 129);
      CHECK(g <= prev + 1e-15);
      prev = g;
    }
  }
}

TEST_CASE("sampled Gaussian symbol is a fixed point up to resampling") {
  const Geometry geo(1, 64);
  // Wide enough that the inverse transform stays nonnegative.
  const double D0 = 8.0;
  std::vector<cplx> hat(geo.sites());
  for (std::size_t j = 0; j < geo.sites(); ++j) {
    const double k = dual_wavevector(geo, j)[0];
    hat[j] = std::exp(-D0 * k * k / 2.0);
  }
  const auto T = TranslationKernel(geo, fft_inverse_real(geo, hat));
  const auto flow = pure_T_flow(T, 2, 2);
  // On the dual grid T^(k)^(L^2) = exp(-D0 (L k)^2 / 2) exactly; only the round
  // trip through position space perturbs it.
  CHECK(flow[1].grid_band_distance <= 1e-10);
}

TEST_CASE("rg_kernel_step: identity walk, deterministic T, stochasticity, errors") {
  const Geometry geo(1, 12);
  std::vector<DenseKernel> id(4, DenseKernel::identity(geo));
  CHECK(rg_kernel_step(id, 2).max_abs_diff(DenseKernel::identity(geo)) == 0.0);

  const auto T = TranslationKernel::hopping(geo, 0.25);
  DenseKernel Tk(geo);
  for (std::size_t y = 0; y < geo.sites(); ++y)
    for (std::size_t x = 0; x < geo.sites(); ++x) Tk(x, y) = T.values()[geo.index({static_cast<int>(x) - static_cast<int>(y), 0, 0})];
  const std::vector<DenseKernel> ts(4, Tk);
  const auto step = rg_kernel_step(ts, 2);
  const auto flow = pure_T_flow(T, 2, 1);
  for (std::size_t y = 0; y < geo.sites(); ++y)
    for (std::size_t x = 0; x < geo.sites(); ++x)
      CHECK(std::abs(step(x, y) - flow[0].prob[geo.index({static_cast<int>(x) - static_cast<int>(y), 0, 0})]) <=
            1e-12);

  const Geometry g2(2, 6);
  const SRBSampler sampler{g2, {MapVariant::Doubling, 0.05}, 16, 4};
  const auto env = generate_environment(sampler.sample(0), sampler.map, CurrentModel{0.1, 0.02}, 9);
  const auto coarse = rg_kernel_step(env, 3);
  CHECK(coarse.column_sum_deviation(1.0) <= 1e-14);
  for (double v : coarse.data()) CHECK(v >= 0.0);
  CHECK_THROWS_AS(rg_kernel_step(env, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(rg_kernel_step(std::span<const DenseKernel>(ts.data(), 3), 2), std::invalid_argument);
}

TEST_CASE("linear L: zero, linearity, brute-force agreement, window errors") {
  const Geometry geo(2, 8);
  const int L = 2;
  const auto T = TranslationKernel::hopping(geo, 0.125);
  const auto powers = t_powers(T, L * L);
  for (int j = 0; j < L * L; ++j) {
    const auto direct = power_direct(T, j);
    for (std::size_t i = 0; i < geo.sites(); ++i) CHECK(std::abs(powers[j][i] - direct[i]) <= 1e-13);
  }

  std::vector<SparseKernel> zero(L * L, SparseKernel(geo));
  CHECK(linear_L_apply(zero, powers, L).max_abs_diff(DenseKernel(Geometry(2, 4))) == 0.0);

  const auto b1 = random_window(geo, L, 1);
  const auto b2 = random_window(geo, L, 2);
  const double alpha = 0.7, beta = -1.3;
  std::vector<SparseKernel> mix;
  for (int i = 0; i < L * L; ++i) {
    std::vector<SparseKernel::Triplet> tr;
    for (std::size_t y = 0; y < geo.sites(); ++y) {
      for (const auto& e : b1[i].column(y)) tr.push_back({e.row, y, alpha * e.value});
      for (const auto& e : b2[i].column(y)) tr.push_back({e.row, y, beta * e.value});
    }
    mix.push_back(SparseKernel::from_triplets(geo, tr));
  }
  const auto l1 = linear_L_apply(b1, powers, L);
  const auto l2 = linear_L_apply(b2, powers, L);
  const auto lm = linear_L_apply(mix, powers, L);
  for (std::size_t y = 0; y < l1.size(); ++y)
    for (std::size_t x = 0; x < l1.size(); ++x)
      CHECK(std::abs(lm(x, y) - (alpha * l1(x, y) + beta * l2(x, y))) <= 1e-12);

  // Brute force: dense matrices, T-powers as circulant matrices.
  const Geometry coarse(2, 4);
  for (std::size_t yc : {std::size_t{0}, std::size_t{5}})
    for (std::size_t xc : {std::size_t{0}, std::size_t{6}, std::size_t{15}}) {
      const Coord cx = coarse.coords(xc), cy = coarse.coords(yc);
      const std::size_t X = geo.index({L * cx[0], L * cx[1], 0});
      const std::size_t Y = geo.index({L * cy[0], L * cy[1], 0});
      double total = 0.0;
      for (int i = 0; i < L * L; ++i) {
        const auto bd = DenseKernel::from_sparse(b1[i]);
        const auto u = power_direct(T, L * L - i - 1);
        const auto v = power_direct(T, i);
        for (std::size_t x = 0; x < geo.sites(); ++x)
          for (std::size_t y = 0; y < geo.sites(); ++y) {
            const Coord a = geo.coords(X), bx = geo.coords(x), by = geo.coords(y), c = geo.coords(Y);
            total += u[geo.index({a[0] - bx[0], a[1] - bx[1], 0})] * bd(x, y) * v[geo.index({by[0] - c[0], by[1] - c[1], 0})];
          }
      }
      CHECK(std::abs(l1(xc, yc) - L * total) <= 1e-12);
    }

  CHECK_THROWS_AS(linear_L_entry(std::span<const SparseKernel>(b1.data(), 3), powers, L, {0, 0, 0}, {0, 0, 0}),
                  std::invalid_argument);
}

TEST_CASE("linear L variance matches the exact i.i.d. formula") {
  // For i.i.d. unit-variance b on the stencil support, Var (Lb)(0,0) is
  // L^(2(d-1)) sum_i sum_y sum_s T^(L^2-i-1)(-(y+s))^2 T^i(y)^2.
  const Geometry geo(2, 16);
  const int L = 2;
  const auto T = TranslationKernel::hopping(geo, 0.125);
  std::vector<std::vector<double>> pw;
  for (int j = 0; j < L * L; ++j) pw.push_back(power_direct(T, j));
  const std::vector<Coord> offsets{{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}};
  double exact = 0.0;
  for (int i = 0; i < L * L; ++i)
    for (std::size_t y = 0; y < geo.sites(); ++y) {
      const Coord cy = geo.coords(y);
      for (const auto& s : offsets) {
        const double u = pw[L * L - i - 1][geo.index({-(cy[0] + s[0]), -(cy[1] + s[1]), 0})];
        exact += u * u * pw[i][y] * pw[i][y];
      }
    }
  exact *= std::pow(L, 2 * (geo.dim() - 1));

  const auto powers = t_powers(T, L * L);
  const int reps = 4000;
  double sum = 0.0, sum2 = 0.0;
  for (int r = 0; r < reps; ++r) {
    const auto w = random_window(geo, L, 1000 + r);
    const double v = linear_L_entry(w, powers, L, {0, 0, 0}, {0, 0, 0});
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / reps;
  const double var = sum2 / reps - mean * mean;
  // Relative standard error of a normal sample variance is sqrt(2 / reps) ~ 2.2%.
  CHECK(std::abs(var / exact - 1.0) <= 0.09);
  CHECK(std::abs(mean) <= 4.0 * std::sqrt(exact / reps));
}

TEST_CASE("estimate_effective_D: Gaussian profile, eps'=0 flow, white noise, errors") {
  const Geometry geo(1, 512);
  const double h = 1.0 / 32.0;
  const double D = 0.5;
  std::vector<double> w(geo.sites());
  for (std::size_t i = 0; i < geo.sites(); ++i) {
    const double x = h * geo.min_image(static_cast<int>(i));
    w[i] = std::sqrt(1.0 / (2.0 * std::numbers::pi * D)) * std::exp(-x * x / (2.0 * D)) * h;
  }
  const auto g = estimate_effective_D(Profile{geo, h, w, 0});
  CHECK(std::abs(g.D - D) <= 1e-3);
  CHECK(g.fit_ok);
  CHECK(std::abs(g.fit_D - D) <= 1e-3);

  const Geometry big(1, 288);
  const auto flow = pure_T_flow(TranslationKernel::hopping(big, 0.25), 2, 5);
  const auto f = estimate_effective_D(Profile{big, 1.0 / 32.0, flow.back().prob, 0});
  CHECK(std::abs(f.D - 0.5) <= 1e-3);
  CHECK(f.fit_ok);

  Rng rng(5);
  std::vector<double> noise(geo.sites());
  for (double& v : noise) v = rng.uniform();
  const auto wn = estimate_effective_D(Profile{geo, h, noise, 0});
  CHECK_FALSE(wn.fit_ok);
  CHECK(wn.uncertainty >= 0.5 * wn.D);

  const std::vector<Profile> both{Profile{geo, h, w, 0}, Profile{geo, h, w, 0}};
  CHECK(std::abs(estimate_effective_D(both).D - D) <= 1e-3);

  std::vector<double> bad(geo.sites(), 0.0);
  CHECK_THROWS_AS(estimate_effective_D(Profile{geo, h, bad, 0}), std::invalid_argument);
  bad[3] = -1.0;
  bad[4] = 2.0;
  CHECK_THROWS_AS(estimate_effective_D(Profile{geo, h, bad, 0}), std::invalid_argument);
  CHECK_THROWS_AS(estimate_effective_D(std::span<const Profile>{}), std::invalid_argument);
}

TEST_CASE("experiment with eps'=0 has zero fluctuation and D_n = D0") {
  RGExperimentConfig c;
  c.geo = Geometry(1, 72);
  c.model = CurrentModel{0.25, 0.0};
  c.L = 2;
  c.n_max = 3;
  c.seeds = 2;
  c.sources = 3;
  const auto res = full_rg_experiment(c);
  CHECK(res.complete);
  CHECK(res.D0 == doctest::Approx(0.5));
  REQUIRE(res.records.size() == 6);
  const auto flow = pure_T_flow(res.T, 2, 3);
  for (const auto& r : res.records) {
    CHECK(r.eps_n == 0.0);
    CHECK(std::abs(r.D_n - 0.5) <= 1e-10);
    CHECK(r.mass_err <= 1e-13);
    CHECK(std::abs(r.gauss_sup_dist - flow[r.n - 1].grid_band_distance) <= 1e-12);
  }
}

TEST_CASE("experiment columns equal the dense iterated RG step") {
  RGExperimentConfig c;
  c.geo = Geometry(1, 40);
  c.L = 2;
  c.n_max = 2;
  c.sources = 1;
  c.burn_in = 16;
  const auto T = TranslationKernel::hopping(c.geo, 0.25);
  const SRBSampler sampler{c.geo, c.map, c.burn_in, 11};
  const auto theta0 = sampler.sample(0);
  const auto recs = rg_flow_single(theta0, c, T, 0);
  REQUIRE(recs.size() == 2);
  const auto env = generate_environment(theta0, c.map, c.model, 16);
  for (int n = 1; n <= 2; ++n) {
    const auto dense = rg_flow_dense(env, 2, n);
    for (std::size_t x = 0; x < c.geo.sites(); ++x) CHECK(std::abs(recs[n - 1].kernel[x] - dense(x, 0)) <= 1e-12);
    CHECK(recs[n - 1].eps_n > 0.0);
    CHECK(recs[n - 1].mass_err <= 1e-13);
  }
}

TEST_CASE("experiment validation and budget") {
  RGExperimentConfig c;
  c.geo = Geometry(1, 64);
  CHECK_THROWS_AS(full_rg_experiment(c), std::invalid_argument);
  c.geo = Geometry(1, 640);
  c.L = 1;
  CHECK_THROWS_AS(full_rg_experiment(c), std::invalid_argument);

  RGExperimentConfig small;
  small.geo = Geometry(1, 40);
  small.L = 2;
  small.n_max = 2;
  small.seeds = 4;
  small.annealed_samples = 50;
  small.budget_seconds = 1e-12;
  const auto res = full_rg_experiment(small);
  CHECK_FALSE(res.complete);
  CHECK(res.records.size() == 2 * res.seeds_completed);
}
