#include "cmldiff/rg.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numbers>
#include <optional>
#include <stdexcept>

#include <boost/math/tools/minima.hpp>

#include "cmldiff/kernels.hpp"
#include "cmldiff/rng.hpp"
#include "cmldiff/srb.hpp"

namespace cmldiff {

namespace {

long long ipow_ll(long long base, int e) {
  long long r = 1;
  for (int i = 0; i < e; ++i) r *= base;
  return r;
}

// Index of the displacement a - b.
std::size_t diff_index(const Geometry& geo, const Coord& a, const Coord& b) {
  std::size_t idx = 0;
  for (int i = geo.dim() - 1; i >= 0; --i)
    idx = idx * static_cast<std::size_t>(geo.side()) + static_cast<std::size_t>(geo.wrap(a[i] - b[i]));
  return idx;
}

double gaussian_symbol(double D0, int d, const Wavevector& k) {
  double k2 = 0.0;
  for (int i = 0; i < d; ++i) k2 += k[i] * k[i];
  return std::exp(-D0 * k2 / (2.0 * d));
}

// sup over dual indices with |k_phys|_inf <= pi, k_phys = 2 pi j S / M.
double band_distance(const Geometry& geo, const std::vector<cplx>& hat, long long S, double D0) {
  const int d = geo.dim();
  const int M = geo.side();
  double worst = 0.0;
  for (std::size_t j = 0; j < geo.sites(); ++j) {
    const Coord c = geo.displacement(j);
    bool inside = true;
    Wavevector k{0, 0, 0};
    for (int i = 0; i < d; ++i) {
      if (2LL * std::abs(c[i]) * S > M) inside = false;
      k[i] = 2.0 * std::numbers::pi * static_cast<double>(c[i]) * static_cast<double>(S) / M;
    }
    if (!inside) continue;
    worst = std::max(worst, std::abs(hat[j] - gaussian_symbol(D0, d, k)));
  }
  return worst;
}

std::vector<double> nn_stencil(const TranslationKernel& T) {
  const Geometry& geo = T.geometry();
  if (T.support_radius() > 1) throw std::invalid_argument("rg_flow_single: T must be nearest-neighbour");
  std::vector<double> st(stencil_width(geo.dim()));
  st[0] = T.values()[0];
  for (int mu = 0; mu < geo.dim(); ++mu) {
    st[stencil_slot(mu, +1)] = T.values()[geo.neighbor(0, mu, +1)];
    st[stencil_slot(mu, -1)] = T.values()[geo.neighbor(0, mu, -1)];
  }
  return st;
}

void check_experiment(const RGExperimentConfig& c) {
  c.model.validate();
  c.map.validate();
  const int d = c.geo.dim();
  if (!c.model.positivity_ok(d)) throw std::invalid_argument("full_rg_experiment: 2d(a + eps') > 1");
  if (c.L < 2) throw std::invalid_argument("full_rg_experiment: L must be >= 2");
  if (c.n_max < 1) throw std::invalid_argument("full_rg_experiment: n_max must be >= 1");
  if (c.sources < 1 || c.sources > static_cast<std::size_t>(c.geo.side()))
    throw std::invalid_argument("full_rg_experiment: sources must be in [1, M]");
  if (c.window_cells < 0) throw std::invalid_argument("full_rg_experiment: window_cells must be >= 0");
  const long long S = ipow_ll(c.L, c.n_max);
  if (c.geo.side() % S != 0) throw std::invalid_argument("full_rg_experiment: M must be a multiple of L^n_max");
  if (c.geo.side() < min_box_side(d, c.L, c.n_max, c.model))
    throw std::invalid_argument("full_rg_experiment: box too small for the deepest scale (M >= " +
                                std::to_string(min_box_side(d, c.L, c.n_max, c.model)) + " required)");
}

}  // namespace

ScaledField ScaledField::from_energy(const EnergyField& E) {
  return ScaledField{E.geometry(), 1, 0, std::vector<double>(E.values().begin(), E.values().end())};
}

double ScaledField::mass() const {
  return compensated_total(values) * std::pow(spacing(), geo.dim());
}

ScaledField scale_field(const ScaledField& E, int L) {
  if (L < 1) throw std::invalid_argument("scale_field: L must be >= 1");
  if (L == 1) return E;
  const long long P = E.grid_factor * L;
  if (E.geo.side() % P != 0) throw std::invalid_argument("scale_field: box side not divisible by the refined grid");
  ScaledField out{E.geo, P, E.n + 1, E.values};
  const double f = std::pow(static_cast<double>(L), E.geo.dim());
  for (double& v : out.values) v *= f;
  return out;
}

int min_box_side(int d, int L, int n, const CurrentModel& model) {
  const long long S = ipow_ll(L, n);
  const double D0max = 2.0 * d * (model.a + model.eps_prime);
  const double need = 12.0 * static_cast<double>(S) * std::sqrt(D0max / d) + 1.0;
  const long long cells = static_cast<long long>(std::ceil(need / static_cast<double>(S)));
  return static_cast<int>(std::max<long long>(cells, 1) * S);
}

std::vector<FourierKernel> pure_T_flow(const TranslationKernel& T, int L, int n) {
  if (L < 2) throw std::invalid_argument("pure_T_flow: L must be >= 2");
  if (n < 1) throw std::invalid_argument("pure_T_flow: n must be >= 1");
  const Geometry& geo = T.geometry();
  const double D0 = T.diffusion_constant();
  bool aperiodic = true;
  for (std::size_t j = 1; j < geo.sites(); ++j)
    if (std::abs(T.hat()[j]) >= 1.0 - 1e-12) aperiodic = false;

  std::vector<FourierKernel> out;
  for (int m = 1; m <= n; ++m) {
    const long long S = ipow_ll(L, m);
    const auto power = static_cast<std::uint64_t>(S * S);
    FourierKernel K;
    K.n = m;
    K.L = L;
    K.geo = geo;
    K.D0 = D0;
    K.aperiodic = aperiodic;
    K.hat.resize(geo.sites());
    for (std::size_t j = 0; j < geo.sites(); ++j) K.hat[j] = ipow(T.hat()[j], power);
    K.prob = fft_inverse_real(geo, K.hat);
    K.grid_band_distance = band_distance(geo, K.hat, S, D0);
    out.push_back(std::move(K));
  }
  return out;
}

double gaussian_band_distance(const TranslationKernel& T, int L, int n, double kmax, int samples) {
  if (samples < 2) throw std::invalid_argument("gaussian_band_distance: samples must be >= 2");
  const int d = T.geometry().dim();
  const double D0 = T.diffusion_constant();
  const double S = std::pow(static_cast<double>(L), n);
  const auto power = static_cast<std::uint64_t>(std::llround(S * S));
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(samples);
  double worst = 0.0;
  for (std::size_t idx = 0; idx < total; ++idx) {
    Wavevector k{0, 0, 0}, ks{0, 0, 0};
    std::size_t r = idx;
    for (int i = 0; i < d; ++i) {
      const auto c = static_cast<double>(r % static_cast<std::size_t>(samples));
      r /= static_cast<std::size_t>(samples);
      k[i] = -kmax + 2.0 * kmax * c / (samples - 1);
      ks[i] = k[i] / S;
    }
    worst = std::max(worst, std::abs(ipow(T.symbol(ks), power) - gaussian_symbol(D0, d, k)));
  }
  return worst;
}

DenseKernel rg_kernel_step(std::span<const DenseKernel> slices, int L) {
  if (L < 1) throw std::invalid_argument("rg_kernel_step: L must be >= 1");
  const auto need = static_cast<std::size_t>(L) * L;
  if (slices.size() < need) throw std::invalid_argument("rg_kernel_step: needs L^2 time slices");
  DenseKernel acc = slices[0];
  for (std::size_t i = 1; i < need; ++i) {
    require_same(slices[i].geometry(), acc.geometry(), "rg_kernel_step");
    acc = slices[i].compose(acc);
  }
  return acc;
}

DenseKernel rg_kernel_step(const EnvironmentKernel& env, int L, std::uint64_t t0) {
  const auto need = static_cast<std::uint64_t>(L) * L;
  if (L < 1 || t0 + need > env.t_max()) throw std::invalid_argument("rg_kernel_step: needs L^2 time slices");
  std::vector<DenseKernel> slices;
  for (std::uint64_t i = 0; i < need; ++i) slices.push_back(DenseKernel::from_sparse(env.sparse_slice(t0 + i)));
  return rg_kernel_step(slices, L);
}

DenseKernel rg_flow_dense(const EnvironmentKernel& env, int L, int n) {
  if (n < 1) throw std::invalid_argument("rg_flow_dense: n must be >= 1");
  const auto total = static_cast<std::uint64_t>(ipow_ll(static_cast<long long>(L) * L, n));
  if (total > env.t_max()) throw std::invalid_argument("rg_flow_dense: needs L^2n time slices");
  std::vector<DenseKernel> level;
  for (std::uint64_t t = 0; t < total; ++t) level.push_back(DenseKernel::from_sparse(env.sparse_slice(t)));
  const std::size_t group = static_cast<std::size_t>(L) * L;
  for (int m = 0; m < n; ++m) {
    std::vector<DenseKernel> next;
    for (std::size_t s = 0; s < level.size(); s += group)
      next.push_back(rg_kernel_step(std::span<const DenseKernel>(level.data() + s, group), L));
    level = std::move(next);
  }
  return level.front();
}

std::vector<std::vector<double>> t_powers(const TranslationKernel& T, int count) {
  if (count < 1) throw std::invalid_argument("t_powers: count must be >= 1");
  const Geometry& geo = T.geometry();
  std::vector<std::vector<double>> out;
  std::vector<double> delta(geo.sites(), 0.0);
  delta[0] = 1.0;
  out.push_back(delta);
  std::vector<cplx> h(geo.sites(), cplx(1.0, 0.0));
  for (int j = 1; j < count; ++j) {
    for (std::size_t i = 0; i < h.size(); ++i) h[i] *= T.hat()[i];
    out.push_back(fft_inverse_real(geo, h));
  }
  return out;
}

double linear_L_entry(std::span<const SparseKernel> window, const std::vector<std::vector<double>>& powers, int L,
                      const Coord& x_coarse, const Coord& y_coarse) {
  const auto LL = static_cast<std::size_t>(L) * L;
  if (L < 1 || window.size() != LL) throw std::invalid_argument("linear_L_entry: window must hold exactly L^2 slices");
  if (powers.size() < LL) throw std::invalid_argument("linear_L_entry: needs T^0 .. T^(L^2-1)");
  const Geometry& geo = window[0].geometry();
  const int d = geo.dim();
  Coord X{0, 0, 0}, Y{0, 0, 0};
  for (int i = 0; i < d; ++i) {
    X[i] = L * x_coarse[i];
    Y[i] = L * y_coarse[i];
  }
  // Displacement indices of X - z and z - Y, shared by all slices.
  std::vector<std::size_t> from_X(geo.sites()), to_Y(geo.sites());
  for (std::size_t z = 0; z < geo.sites(); ++z) {
    const Coord c = geo.coords(z);
    from_X[z] = diff_index(geo, X, c);
    to_Y[z] = diff_index(geo, c, Y);
  }
  double total = 0.0;
  for (std::size_t i = 0; i < LL; ++i) {
    require_same(window[i].geometry(), geo, "linear_L_entry");
    const auto& u = powers[LL - i - 1];
    const auto& v = powers[i];
    double acc = 0.0;
    for (std::size_t y = 0; y < geo.sites(); ++y) {
      const auto col = window[i].column(y);
      if (col.empty()) continue;
      const double vy = v[to_Y[y]];
      if (vy == 0.0) continue;
      double inner = 0.0;
      for (const auto& e : col) inner += u[from_X[e.row]] * e.value;
      acc += inner * vy;
    }
    total += acc;
  }
  return std::pow(static_cast<double>(L), d - 1) * total;
}

DenseKernel linear_L_apply(std::span<const SparseKernel> window, const std::vector<std::vector<double>>& powers,
                           int L) {
  if (window.empty()) throw std::invalid_argument("linear_L_apply: empty window");
  const Geometry& geo = window[0].geometry();
  if (geo.side() % L != 0 || geo.side() / L < 2) throw std::invalid_argument("linear_L_apply: M must be a multiple of L");
  const Geometry coarse(geo.dim(), geo.side() / L);
  DenseKernel out(coarse);
  for (std::size_t y = 0; y < coarse.sites(); ++y)
    for (std::size_t x = 0; x < coarse.sites(); ++x)
      out(x, y) = linear_L_entry(window, powers, L, coarse.coords(x), coarse.coords(y));
  return out;
}

DEstimate estimate_effective_D(const Profile& p, double t_eff) {
  const Geometry& geo = p.geo;
  const int d = geo.dim();
  if (p.weights.size() != geo.sites()) throw std::invalid_argument("estimate_effective_D: size mismatch");
  if (!(t_eff > 0.0) || !(p.spacing > 0.0)) throw std::invalid_argument("estimate_effective_D: bad t_eff or spacing");
  CompensatedSum total;
  for (double w : p.weights) {
    if (!std::isfinite(w)) throw std::invalid_argument("estimate_effective_D: non-finite weight");
    total.add(w);
  }
  const double mass = total.value();
  if (!(mass > 0.0)) throw std::invalid_argument("estimate_effective_D: profile has no positive mass");
  for (double w : p.weights)
    if (w < -1e-12 * mass) throw std::invalid_argument("estimate_effective_D: negative weight");

  const Coord o = geo.coords(p.origin);
  std::vector<std::array<double, kMaxDim>> pos(geo.sites());
  std::array<double, kMaxDim> mean{0, 0, 0};
  for (std::size_t s = 0; s < geo.sites(); ++s) {
    const Coord c = geo.coords(s);
    for (int i = 0; i < d; ++i) {
      pos[s][i] = p.spacing * geo.min_image(c[i] - o[i]);
      mean[i] += pos[s][i] * p.weights[s] / mass;
    }
  }
  std::vector<double> r2(geo.sites());
  CompensatedSum second;
  for (std::size_t s = 0; s < geo.sites(); ++s) {
    double q = 0.0;
    for (int i = 0; i < d; ++i) q += (pos[s][i] - mean[i]) * (pos[s][i] - mean[i]);
    r2[s] = q;
    second.add(q * p.weights[s]);
  }
  DEstimate est;
  est.moment_D = second.value() / mass / t_eff;
  est.D = est.moment_D;
  if (!(est.moment_D > 0.0)) {
    est.uncertainty = std::numeric_limits<double>::infinity();
    return est;
  }

  // Least squares of the density against A * T*_{D t_eff}, A in closed form.
  const double cell = std::pow(p.spacing, d);
  std::vector<double> rho(geo.sites());
  double rho2 = 0.0;
  for (std::size_t s = 0; s < geo.sites(); ++s) {
    rho[s] = p.weights[s] / (mass * cell);
    rho2 += rho[s] * rho[s];
  }
  struct Fit {
    double S, A;
  };
  auto fit_at = [&](double D) {
    const double Dt = D * t_eff;
    const double norm = std::pow(d / (2.0 * std::numbers::pi * Dt), 0.5 * d);
    double rg = 0.0, gg = 0.0;
    for (std::size_t s = 0; s < geo.sites(); ++s) {
      const double g = norm * std::exp(-d * r2[s] / (2.0 * Dt));
      rg += rho[s] * g;
      gg += g * g;
    }
    if (gg == 0.0) return Fit{rho2, 0.0};
    return Fit{std::max(0.0, rho2 - rg * rg / gg), rg / gg};
  };
  const double span = std::log(50.0);
  const double lo = std::log(est.moment_D) - span, hi = std::log(est.moment_D) + span;
  const auto best = boost::math::tools::brent_find_minima([&](double lD) { return fit_at(std::exp(lD)).S; }, lo,
                                                          hi, 40);
  const Fit f = fit_at(std::exp(best.first));
  est.fit_D = std::exp(best.first);
  est.fit_residual = rho2 > 0.0 ? std::sqrt(f.S / rho2) : 0.0;
  const bool edge = best.first < lo + 1e-3 || best.first > hi - 1e-3;
  est.fit_ok = !edge && est.fit_residual < 0.1 && f.A > 0.5 && f.A < 2.0;
  const double spread = std::abs(est.moment_D - est.fit_D);
  est.uncertainty = est.fit_ok ? spread : std::max(spread, est.moment_D);
  return est;
}

DEstimate estimate_effective_D(std::span<const Profile> profiles, double t_eff) {
  if (profiles.empty()) throw std::invalid_argument("estimate_effective_D: no profiles");
  DEstimate out;
  out.fit_ok = true;
  std::vector<double> moments;
  double spread = 0.0;
  for (const auto& p : profiles) {
    const DEstimate e = estimate_effective_D(p, t_eff);
    moments.push_back(e.moment_D);
    out.moment_D += e.moment_D;
    out.fit_D += e.fit_D;
    out.fit_residual = std::max(out.fit_residual, e.fit_residual);
    out.fit_ok = out.fit_ok && e.fit_ok;
    spread = std::max(spread, e.uncertainty);
  }
  const double n = static_cast<double>(profiles.size());
  out.moment_D /= n;
  out.fit_D /= n;
  out.D = out.moment_D;
  double var = 0.0;
  for (double m : moments) var += (m - out.moment_D) * (m - out.moment_D);
  const double sd = profiles.size() > 1 ? std::sqrt(var / (n - 1)) : 0.0;
  out.uncertainty = std::max(spread, sd);
  return out;
}

std::vector<RGFlowRecord> rg_flow_single(const ThetaField& theta0, const RGExperimentConfig& config,
                                         const TranslationKernel& T, std::uint64_t seed) {
  const Geometry& geo = config.geo;
  require_same(theta0.geometry(), geo, "rg_flow_single");
  require_same(T.geometry(), geo, "rg_flow_single");
  const int d = geo.dim();
  const int w = stencil_width(d);
  const std::size_t N = geo.sites();
  const int L = config.L;
  const std::size_t K = config.sources;
  const double D0 = T.diffusion_constant();

  const auto tst = nn_stencil(T);
  std::vector<double> T_stencil(N * w);
  for (std::size_t y = 0; y < N; ++y) std::copy(tst.begin(), tst.end(), T_stencil.begin() + y * w);

  std::vector<Coord> src(K);
  std::vector<std::vector<double>> cols(K, std::vector<double>(N, 0.0));
  for (std::size_t k = 0; k < K; ++k) {
    src[k] = Coord{static_cast<int>(k * geo.side() / K), 0, 0};
    cols[k][geo.index(src[k])] = 1.0;
  }
  std::vector<double> tcol(N, 0.0), buf(N), st(N * w);
  tcol[0] = 1.0;

  std::vector<std::vector<std::size_t>> shifted(K, std::vector<std::size_t>(N));
  for (std::size_t k = 0; k < K; ++k)
    for (std::size_t z = 0; z < N; ++z) {
      Coord c = geo.coords(z);
      for (int i = 0; i < d; ++i) c[i] += src[k][i];
      shifted[k][z] = geo.index(c);
    }

  std::vector<RGFlowRecord> records;
  ThetaField theta = theta0;
  const auto t_total = static_cast<std::uint64_t>(ipow_ll(static_cast<long long>(L) * L, config.n_max));
  int next_n = 1;
  std::uint64_t next_t = static_cast<std::uint64_t>(L) * L;
  for (std::uint64_t t = 0; t < t_total; ++t) {
    kernels::assemble_stencil(theta, config.model, st);
    for (auto& c : cols) {
      kernels::apply_stencil(geo, st, c, buf);
      c.swap(buf);
    }
    kernels::apply_stencil(geo, T_stencil, tcol, buf);
    tcol.swap(buf);
    if (t + 1 < t_total) theta = step_theta(theta, config.map);
    if (t + 1 != next_t) continue;

    const long long S = ipow_ll(L, next_n);
    const int W = std::min<int>(config.window_cells, static_cast<int>((geo.side() / S - 1) / 2));
    const int side = 2 * W + 1;
    std::size_t ncells = 1;
    for (int i = 0; i < d; ++i) ncells *= static_cast<std::size_t>(side);

    RGFlowRecord rec;
    rec.seed = seed;
    rec.n = next_n;
    rec.L = L;
    rec.kernel.assign(N, 0.0);
    double sq = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      rec.mass_err = std::max(rec.mass_err, std::abs(compensated_total(cols[k]) - 1.0));
      std::vector<double> cell(ncells, 0.0);
      for (std::size_t z = 0; z < N; ++z) {
        const double p = cols[k][shifted[k][z]];
        rec.kernel[z] += p / static_cast<double>(K);
        const Coord c = geo.displacement(z);
        std::size_t ci = 0;
        bool inside = true;
        for (int i = d - 1; i >= 0; --i) {
          const long long u = (2LL * c[i] + S) >= 0 ? (2LL * c[i] + S) / (2 * S) : -((S - 2LL * c[i] - 1) / (2 * S));
          if (u < -W || u > W) inside = false;
          ci = ci * static_cast<std::size_t>(side) + static_cast<std::size_t>(u + W);
        }
        if (inside) cell[ci] += p - tcol[z];
      }
      for (double v : cell) sq += v * v;
    }
    rec.eps_n = std::sqrt(sq / static_cast<double>(K * ncells));
    rec.D_n = estimate_effective_D(Profile{geo, 1.0 / static_cast<double>(S), rec.kernel, 0}).moment_D;
    rec.gauss_sup_dist = band_distance(geo, fft_forward(geo, rec.kernel), S, D0);
    records.push_back(std::move(rec));
    ++next_n;
    next_t *= static_cast<std::uint64_t>(L) * L;
  }
  return records;
}

RGExperimentResult full_rg_experiment(const RGExperimentConfig& config) {
  check_experiment(config);
  RGExperimentResult out;
  const auto est = annealed_kernel(config.geo, config.model, config.map, config.annealed_samples, config.burn_in,
                                   stream_seed(config.master_seed, "annealed", 0));
  out.T = est.kernel;
  out.D0 = out.T.diffusion_constant();

  const SRBSampler sampler{config.geo, config.map, config.burn_in, config.master_seed};
  std::vector<std::optional<std::vector<RGFlowRecord>>> per_seed(config.seeds);
  const auto start = std::chrono::steady_clock::now();
  const auto n = static_cast<std::ptrdiff_t>(config.seeds);
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < n; ++s) {
    if (config.budget_seconds > 0.0) {
      const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
      if (el.count() > config.budget_seconds) continue;
    }
    const auto seed = static_cast<std::uint64_t>(s);
    try {
      per_seed[s] = rg_flow_single(sampler.sample(seed), config, out.T, seed);
    } catch (...) {
#pragma omp critical(rg_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  for (auto& r : per_seed) {
    if (!r) {
      out.complete = false;
      continue;
    }
    ++out.seeds_completed;
    for (auto& rec : *r) out.records.push_back(std::move(rec));
  }
  return out;
}

}  // namespace cmldiff
