#include "cmldiff/rwre.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "cmldiff/kernels.hpp"
#include "cmldiff/rng.hpp"
#include "cmldiff/srb.hpp"

namespace cmldiff {
namespace {

constexpr double kColumnTolerance = 1e-14;

double mean_of(const std::vector<double>& v) {
  CompensatedSum s;
  for (double x : v) s.add(x);
  return s.value() / static_cast<double>(v.size());
}

double stderr_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
}

// Site average of each stencil slot.
std::vector<double> slot_means(const Geometry& geo, std::span<const double> stencil) {
  const int w = stencil_width(geo.dim());
  std::vector<double> out(w, 0.0);
  for (int s = 0; s < w; ++s) {
    CompensatedSum acc;
    for (std::size_t y = 0; y < geo.sites(); ++y) acc.add(stencil[y * w + s]);
    out[s] = acc.value() / static_cast<double>(geo.sites());
  }
  return out;
}

// Stencil with slot 0 rebuilt as 1 - sum of hops, accumulated in the same
// order as the stencil assembly kernel.
std::vector<double> close_stencil(int d, std::vector<double> st) {
  double out = 0.0;
  for (int mu = 0; mu < d; ++mu) out += st[stencil_slot(mu, +1)] + st[stencil_slot(mu, -1)];
  st[0] = 1.0 - out;
  return st;
}

std::vector<double> stencil_of_kernel(const TranslationKernel& T) {
  const Geometry& geo = T.geometry();
  const int d = geo.dim();
  if (T.support_radius() > 1) throw std::invalid_argument("fluctuation_split: T must be nearest-neighbour");
  std::vector<double> st(stencil_width(d));
  st[0] = T.values()[0];
  for (int mu = 0; mu < d; ++mu) {
    st[stencil_slot(mu, +1)] = T.values()[geo.neighbor(0, mu, +1)];
    st[stencil_slot(mu, -1)] = T.values()[geo.neighbor(0, mu, -1)];
  }
  return st;
}

}  // namespace

EnvironmentKernel::EnvironmentKernel(Geometry geo, std::uint64_t t_max, std::vector<double> stencils,
                                     EnvironmentInfo info)
    : geo_(geo), t_max_(t_max), stencils_(std::move(stencils)), info_(info) {
  if (stencils_.size() != t_max_ * geo_.sites() * width())
    throw std::invalid_argument("EnvironmentKernel: stencil array size mismatch");
  for (double v : stencils_)
    if (!(v >= 0.0)) throw std::invalid_argument("EnvironmentKernel: negative transition weight");
  const double dev = max_column_sum_deviation();
  if (dev > kColumnTolerance) {
    std::ostringstream msg;
    msg << "EnvironmentKernel: column sum deviates from 1 by " << dev;
    throw std::invalid_argument(msg.str());
  }
}

std::span<const double> EnvironmentKernel::slice(std::uint64_t t) const {
  if (t >= t_max_) throw std::out_of_range("EnvironmentKernel: time beyond range");
  const std::size_t n = geo_.sites() * width();
  return {stencils_.data() + t * n, n};
}

double EnvironmentKernel::weight(std::uint64_t t, std::size_t y, int axis, int s) const {
  const auto sl = slice(t);
  return sl[y * width() + (s == 0 ? 0 : stencil_slot(axis, s))];
}

void EnvironmentKernel::apply(std::uint64_t t, std::span<const double> in, std::span<double> out) const {
  kernels::apply_stencil(geo_, slice(t), in, out);
}

SparseKernel EnvironmentKernel::sparse_slice(std::uint64_t t) const {
  const auto sl = slice(t);
  const int w = width();
  std::vector<std::vector<SparseKernel::Entry>> cols(geo_.sites());
  for (std::size_t y = 0; y < geo_.sites(); ++y) {
    cols[y].push_back({y, sl[y * w]});
    for (int mu = 0; mu < geo_.dim(); ++mu)
      for (int s : {+1, -1}) cols[y].push_back({geo_.neighbor(y, mu, s), sl[y * w + stencil_slot(mu, s)]});
  }
  return SparseKernel(geo_, cols);
}

double EnvironmentKernel::max_column_sum_deviation() const {
  const int w = width();
  double worst = 0.0;
  for (std::size_t c = 0; c * w < stencils_.size(); ++c) {
    CompensatedSum s;
    for (int k = 0; k < w; ++k) s.add(stencils_[c * w + k]);
    worst = std::max(worst, std::abs(s.value() - 1.0));
  }
  return worst;
}

EnvironmentKernel linearize_at_zero(std::span<const ThetaField> trajectory, const CurrentModel& model,
                                    const LocalChaoticMap& map, std::uint64_t seed) {
  if (trajectory.empty()) throw std::invalid_argument("linearize_at_zero: empty trajectory");
  model.validate();
  const Geometry& geo = trajectory.front().geometry();
  const std::size_t n = geo.sites() * stencil_width(geo.dim());
  std::vector<double> st(trajectory.size() * n);
  for (std::size_t t = 0; t < trajectory.size(); ++t) {
    require_same(geo, trajectory[t].geometry(), "linearize_at_zero");
    kernels::assemble_stencil(trajectory[t], model, std::span<double>(st.data() + t * n, n));
  }
  return EnvironmentKernel(geo, trajectory.size(), std::move(st), {model, map, seed});
}

EnvironmentKernel generate_environment(const ThetaField& theta0, const LocalChaoticMap& map, const CurrentModel& model,
                                       std::uint64_t t_max, std::uint64_t seed) {
  model.validate();
  map.validate();
  const Geometry& geo = theta0.geometry();
  const std::size_t n = geo.sites() * stencil_width(geo.dim());
  std::vector<double> st(t_max * n);
  ThetaField theta = theta0;
  for (std::uint64_t t = 0; t < t_max; ++t) {
    kernels::assemble_stencil(theta, model, std::span<double>(st.data() + t * n, n));
    if (t + 1 < t_max) theta = step_theta(theta, map);
  }
  return EnvironmentKernel(geo, t_max, std::move(st), {model, map, seed});
}

DenseKernel finite_difference_jacobian(const ThetaField& theta, const CurrentModel& model,
                                       std::span<const double> base, double h) {
  const Geometry& geo = theta.geometry();
  if (base.size() != geo.sites()) throw std::invalid_argument("finite_difference_jacobian: size mismatch");
  DenseKernel J(geo);
  std::vector<double> e(base.begin(), base.end());
  for (std::size_t y = 0; y < geo.sites(); ++y) {
    const double step = h * std::max(1.0, std::abs(base[y]));
    e[y] = base[y] + step;
    const auto up = energy_update_unchecked(e, theta, model);
    e[y] = base[y] - step;
    const auto dn = energy_update_unchecked(e, theta, model);
    e[y] = base[y];
    for (std::size_t x = 0; x < geo.sites(); ++x) J(x, y) = (up[x] - dn[x]) / (2.0 * step);
  }
  return J;
}

AnnealedKernelEstimate annealed_kernel(const Geometry& geo, const CurrentModel& model, const LocalChaoticMap& map,
                                       std::size_t n_samples, std::uint64_t burn_in, std::uint64_t master_seed) {
  if (n_samples < 1) throw std::invalid_argument("annealed_kernel: n_samples must be >= 1");
  model.validate();
  const int d = geo.dim();
  const int w = stencil_width(d);
  AnnealedKernelEstimate out;
  out.samples = n_samples;
  out.std_error.assign(w, 0.0);
  if (model.eps_prime == 0.0) {
    out.kernel = TranslationKernel::hopping(geo, model.a);
    out.raw_kernel = out.kernel;
    out.raw_stencil = close_stencil(d, std::vector<double>(w, model.a));
    return out;
  }

  const SRBSampler sampler{geo, map, burn_in, master_seed};
  std::vector<std::vector<double>> per_sample(n_samples);
  const auto n = static_cast<std::ptrdiff_t>(n_samples);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const ThetaField th = sampler.sample(static_cast<std::uint64_t>(i));
    std::vector<double> st(geo.sites() * w);
    kernels::reference::assemble_stencil(th, model, st);
    per_sample[i] = slot_means(geo, st);
  }

  std::vector<double> mean(w);
  for (int s = 0; s < w; ++s) {
    std::vector<double> col(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) col[i] = per_sample[i][s];
    mean[s] = mean_of(col);
    out.std_error[s] = stderr_of(col);
  }
  out.raw_stencil = close_stencil(d, mean);
  out.raw_kernel = TranslationKernel::from_stencil(geo, out.raw_stencil);

  double hop = 0.0;
  for (int s = 1; s < w; ++s) hop += mean[s];
  hop /= static_cast<double>(w - 1);
  std::vector<double> sym = close_stencil(d, std::vector<double>(w, hop));
  out.kernel = TranslationKernel::from_stencil(geo, sym);

  for (int s = 0; s < w; ++s) {
    const double corr = std::abs(out.raw_stencil[s] - sym[s]);
    if (out.std_error[s] > 0.0)
      out.symmetry_correction_sigmas = std::max(out.symmetry_correction_sigmas, corr / out.std_error[s]);
    else if (corr > 1e-15)
      out.symmetry_correction_sigmas = std::numeric_limits<double>::infinity();
  }
  out.symmetry_warning = out.symmetry_correction_sigmas > 3.0;
  return out;
}

std::span<const double> FluctuationField::delta_slice(std::uint64_t t) const {
  if (t >= t_max_) throw std::out_of_range("FluctuationField: time beyond range");
  const std::size_t n = geo_.sites() * stencil_width(geo_.dim());
  return {delta_.data() + t * n, n};
}

SparseKernel FluctuationField::delta_sparse(std::uint64_t t) const {
  const auto sl = delta_slice(t);
  const int w = stencil_width(geo_.dim());
  std::vector<std::vector<SparseKernel::Entry>> cols(geo_.sites());
  for (std::size_t y = 0; y < geo_.sites(); ++y) {
    cols[y].push_back({y, sl[y * w]});
    for (int mu = 0; mu < geo_.dim(); ++mu)
      for (int s : {+1, -1}) cols[y].push_back({geo_.neighbor(y, mu, s), sl[y * w + stencil_slot(mu, s)]});
  }
  return SparseKernel(geo_, cols);
}

SparseKernel FluctuationField::bond_sparse(std::uint64_t t) const {
  if (!has_bonds()) throw std::logic_error("FluctuationField: bond field only exists in d = 1");
  if (t >= t_max_) throw std::out_of_range("FluctuationField: time beyond range");
  std::vector<std::vector<SparseKernel::Entry>> cols(geo_.sites());
  for (std::size_t y = 0; y < geo_.sites(); ++y) {
    const double* b = bonds_.data() + 2 * (t * geo_.sites() + y);
    cols[y] = {{y, b[0]}, {geo_.neighbor(y, 0, +1), b[1]}};
  }
  return SparseKernel(geo_, cols);
}

double FluctuationField::bond_reconstruction_error() const {
  if (!has_bonds()) throw std::logic_error("FluctuationField: bond field only exists in d = 1");
  double worst = 0.0;
  const std::size_t N = geo_.sites();
  for (std::uint64_t t = 0; t < t_max_; ++t) {
    const auto b = DenseKernel::from_sparse(bond_sparse(t));
    const auto dl = DenseKernel::from_sparse(delta_sparse(t));
    for (std::size_t y = 0; y < N; ++y)
      for (std::size_t x = 0; x < N; ++x)
        worst = std::max(worst, std::abs(b(geo_.neighbor(x, 0, +1), y) - b(x, y) - dl(x, y)));
  }
  return worst;
}

FluctuationField fluctuation_split(const EnvironmentKernel& env, const TranslationKernel& T) {
  const Geometry& geo = env.geometry();
  require_same(geo, T.geometry(), "fluctuation_split");
  const auto Tst = stencil_of_kernel(T);
  const int w = env.width();
  FluctuationField f;
  f.geo_ = geo;
  f.t_max_ = env.t_max();
  f.delta_.resize(env.data().size());
  for (std::size_t i = 0; i < f.delta_.size(); ++i) f.delta_[i] = env.data()[i] - Tst[i % w];
  if (geo.dim() == 1) {
    if (geo.side() < 3) throw std::invalid_argument("fluctuation_split: bond field needs M >= 3");
    f.bonds_.resize(2 * env.t_max() * geo.sites());
    for (std::size_t c = 0; c < env.t_max() * geo.sites(); ++c) {
      const double* dl = f.delta_.data() + c * w;
      f.bonds_[2 * c] = dl[stencil_slot(0, -1)];
      f.bonds_[2 * c + 1] = -dl[stencil_slot(0, +1)];
    }
  }
  return f;
}

EnergyField quenched_evolve(const EnergyField& E0, const EnvironmentKernel& env, std::uint64_t t) {
  require_same(E0.geometry(), env.geometry(), "quenched_evolve");
  if (t > env.t_max()) throw std::out_of_range("quenched_evolve: t exceeds the environment's time range");
  std::vector<double> cur(E0.values().begin(), E0.values().end());
  std::vector<double> next(cur.size());
  for (std::uint64_t s = 0; s < t; ++s) {
    env.apply(s, cur, next);
    cur.swap(next);
  }
  return EnergyField(E0.geometry(), std::move(cur));
}

bool AssumptionReport::all_passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.passed; });
}

std::vector<std::string> AssumptionReport::failed() const {
  std::vector<std::string> out;
  for (const auto& c : checks)
    if (!c.passed) out.push_back(c.name);
  return out;
}

AssumptionReport validate_assumptions(const CurrentModel& model, const LocalChaoticMap& map,
                                      const ValidationOptions& opt) {
  const Geometry& geo = opt.geo;
  const int d = geo.dim();
  const int w = stencil_width(d);
  const std::size_t N = geo.sites();
  const std::size_t ns = std::max<std::size_t>(opt.n_samples, 2);
  const SRBSampler sampler{geo, map, opt.burn_in, opt.master_seed};
  AssumptionReport rep;
  for (int i = 0; i < 6; ++i) rep.checks[i].name = std::array<const char*, 6>{
      "positivity", "conservation", "symmetry", "decay", "aperiodicity", "weak_randomness"}[i];

  // Per-sample stencils at time 0 and the samples themselves.
  const auto samples = sample_srb(sampler, ns);
  std::vector<std::vector<double>> stencils(ns, std::vector<double>(N * w));
  for (std::size_t i = 0; i < ns; ++i) kernels::reference::assemble_stencil(samples[i], model, stencils[i]);

  // (i) positivity: a spike at y maps to column y of p, so the smallest stencil
  // entry is the smallest output over all spike inputs; random E adds a bulk check.
  {
    auto& c = rep.checks[0];
    double worst = std::numeric_limits<double>::infinity();
    std::ostringstream witness;
    for (std::size_t i = 0; i < ns; ++i) {
      for (std::size_t k = 0; k < N * w; ++k) {
        if (stencils[i][k] < worst) {
          worst = stencils[i][k];
          witness.str("");
          witness << "sample " << i << ": E = unit spike at site " << k / w << " gives "
                  << (k % w == 0 ? "E'(site)" : "a neighbour value") << " = " << stencils[i][k];
        }
      }
      Rng rng(opt.master_seed, "validate-E", i);
      std::vector<double> E(N);
      for (double& v : E) v = rng.uniform();
      const auto f = energy_update_unchecked(E, samples[i], model);
      const double m = *std::min_element(f.begin(), f.end());
      if (m < worst) {
        worst = m;
        witness.str("");
        witness << "sample " << i << ": random E gives min E' = " << m;
      }
    }
    c.statistic = worst;
    c.threshold = 0.0;
    c.passed = worst >= 0.0;
    c.detail = c.passed ? "all outputs nonnegative" : witness.str();
  }

  // (ii) conservation within 8 ulp of the mass.
  {
    auto& c = rep.checks[1];
    double worst = 0.0;
    for (std::size_t i = 0; i < ns; ++i) {
      Rng rng(opt.master_seed, "validate-E", i);
      std::vector<double> E(N);
      for (double& v : E) v = rng.uniform();
      const double m = compensated_total(E);
      const double drift = std::abs(compensated_total(energy_update_unchecked(E, samples[i], model)) - m) / m;
      worst = std::max(worst, drift);
    }
    c.statistic = worst;
    c.threshold = 8.0 * std::numeric_limits<double>::epsilon();
    c.passed = worst <= c.threshold;
    c.detail = "max relative mass drift over samples";
  }

  // (iii) point-group symmetry of the law of p: paired per-sample comparisons
  // of site-averaged first moments, second moments and retention cross
  // moments between every pair of hop directions.
  {
    auto& c = rep.checks[2];
    std::vector<std::array<std::vector<double>, 3>> stats(w);
    for (std::size_t i = 0; i < ns; ++i) {
      for (int s = 1; s < w; ++s) {
        CompensatedSum m1, m2, mx;
        for (std::size_t y = 0; y < N; ++y) {
          const double v = stencils[i][y * w + s];
          m1.add(v);
          m2.add(v * v);
          mx.add(v * stencils[i][y * w]);
        }
        stats[s][0].push_back(m1.value() / N);
        stats[s][1].push_back(m2.value() / N);
        stats[s][2].push_back(mx.value() / N);
      }
    }
    double worst = 0.0;
    std::string where = "none";
    for (int s1 = 1; s1 < w; ++s1)
      for (int s2 = s1 + 1; s2 < w; ++s2)
        for (int q = 0; q < 3; ++q) {
          std::vector<double> diff(ns);
          for (std::size_t i = 0; i < ns; ++i) diff[i] = stats[s1][q][i] - stats[s2][q][i];
          const double m = mean_of(diff);
          const double se = stderr_of(diff);
          const double z = std::abs(m) <= 1e-12 ? 0.0 : (se > 0.0 ? std::abs(m) / se : std::numeric_limits<double>::infinity());
          if (z > worst) {
            worst = z;
            std::ostringstream os;
            os << "slots " << s1 << " vs " << s2 << ", moment " << q << ": diff " << m << " +- " << se;
            where = os.str();
          }
        }
    c.statistic = worst;
    c.threshold = 4.0;
    c.passed = worst <= 4.0;
    c.detail = where;
  }

  // (iv) decay of |d f(x) / d E(y)| in |x - y| by central differences.
  {
    auto& c = rep.checks[3];
    const int rmax = std::min(4, geo.side() / 2);
    std::vector<double> by_r(rmax + 1, 0.0);
    const std::size_t nfd = std::min<std::size_t>(ns, 4);
    for (std::size_t i = 0; i < nfd; ++i) {
      Rng rng(opt.master_seed, "validate-fd", i);
      std::vector<double> E(N);
      for (double& v : E) v = 0.5 + rng.uniform();
      std::vector<double> e = E;
      const double h = opt.fd_step;
      e[0] = E[0] + h;
      const auto up = energy_update_unchecked(e, samples[i], model);
      e[0] = E[0] - h;
      const auto dn = energy_update_unchecked(e, samples[i], model);
      for (std::size_t x = 0; x < N; ++x) {
        const int r = l1_norm(geo.displacement(x), d);
        if (r <= rmax) by_r[r] = std::max(by_r[r], std::abs(up[x] - dn[x]) / (2.0 * h));
      }
    }
    // Values at the rounding floor of the difference quotient count as zero.
    const double floor = 1e-8;
    double far = 0.0;
    for (int r = 2; r <= rmax; ++r) far = std::max(far, by_r[r]);
    if (far <= floor) {
      c.passed = true;
      c.statistic = std::numeric_limits<double>::infinity();
      c.detail = "derivative vanishes beyond distance 1 (finite range)";
    } else {
      std::vector<double> dist, vals;
      for (int r = 0; r <= rmax; ++r) {
        dist.push_back(r);
        vals.push_back(by_r[r] > floor ? by_r[r] : 0.0);
      }
      try {
        const auto fit = decay_rate_fit(dist, vals);
        c.statistic = fit.m;
        c.passed = !fit.no_decay;
        c.detail = "fitted decay rate of the derivative";
      } catch (const std::exception& e) {
        c.passed = false;
        c.detail = e.what();
      }
    }
    c.threshold = 0.0;
  }

  // (v) |T^(k)| < 1 off k = 0 for the unsymmetrized annealed kernel.
  std::vector<double> Tst(w, 0.0);
  {
    auto& c = rep.checks[4];
    for (int s = 1; s < w; ++s) {
      CompensatedSum acc;
      for (std::size_t i = 0; i < ns; ++i)
        for (std::size_t y = 0; y < N; ++y) acc.add(stencils[i][y * w + s]);
      Tst[s] = acc.value() / static_cast<double>(ns * N);
    }
    Tst = close_stencil(d, Tst);
    const auto T = TranslationKernel::from_stencil(geo, Tst);
    double worst = 0.0;
    for (std::size_t j = 1; j < N; ++j) worst = std::max(worst, std::abs(T.hat()[j]));
    c.statistic = worst;
    c.threshold = 1.0 - 1e-12;
    c.passed = worst < c.threshold;
    c.detail = "max |T^(k)| over nonzero dual-grid k";
  }

  // (vi) eps = sup_t ||p_t - T||_lambda against a fraction of ||T - 1||_lambda.
  {
    auto& c = rep.checks[5];
    const WeightedNormParams params{opt.lambda};
    std::vector<std::vector<SparseKernel::Entry>> cols(N);
    for (std::size_t y = 0; y < N; ++y) {
      cols[y].push_back({y, Tst[0] - 1.0});
      for (int mu = 0; mu < d; ++mu)
        for (int s : {+1, -1}) cols[y].push_back({geo.neighbor(y, mu, s), Tst[stencil_slot(mu, s)]});
    }
    const double scale = weighted_kernel_norm_simplified(SparseKernel(geo, cols), 1, params);
    double eps = 0.0;
    const std::size_t nv = std::min<std::size_t>(ns, 8);
    for (std::size_t i = 0; i < nv; ++i) {
      // Raw stencils: a positivity-violating model must still be measurable here.
      ThetaField th = samples[i];
      std::vector<double> sl(N * w);
      for (std::uint64_t t = 0; t < opt.t_steps; ++t) {
        if (t > 0) th = step_theta(th, map);
        kernels::reference::assemble_stencil(th, model, sl);
        std::vector<std::vector<SparseKernel::Entry>> dc(N);
        for (std::size_t y = 0; y < N; ++y) {
          dc[y].push_back({y, sl[y * w] - Tst[0]});
          for (int mu = 0; mu < d; ++mu)
            for (int s : {+1, -1})
              dc[y].push_back({geo.neighbor(y, mu, s), sl[y * w + stencil_slot(mu, s)] - Tst[stencil_slot(mu, s)]});
        }
        eps = std::max(eps, weighted_kernel_norm_simplified(SparseKernel(geo, dc), 1, params));
      }
    }
    c.statistic = eps;
    c.threshold = opt.weak_ratio * scale;
    c.passed = eps <= c.threshold;
    std::ostringstream os;
    os << "sup_t ||delta_t||_lambda = " << eps << ", ||T - 1||_lambda = " << scale;
    c.detail = os.str();
  }
  return rep;
}

AnnealedDiffusion annealed_current(const CurrentModel& model, const LocalChaoticMap& map, const EnergyField& E_profile,
                                   std::size_t n_samples, std::uint64_t burn_in, std::uint64_t master_seed) {
  if (n_samples < 1) throw std::invalid_argument("annealed_current: n_samples must be >= 1");
  model.validate();
  const Geometry& geo = E_profile.geometry();
  const int d = geo.dim();
  const std::size_t N = geo.sites();
  const SRBSampler sampler{geo, map, burn_in, master_seed};
  const auto samples = sample_srb(sampler, n_samples);

  AnnealedDiffusion out;
  out.samples = n_samples;
  out.current.assign(d * N, 0.0);
  out.current_stderr.assign(d * N, 0.0);
  std::vector<std::vector<double>> J(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) J[i] = bond_currents(E_profile, samples[i], model);
  for (std::size_t k = 0; k < d * N; ++k) {
    std::vector<double> v(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i) v[i] = J[i][k];
    out.current[k] = mean_of(v);
    out.current_stderr[k] = stderr_of(v);
  }

  // phi_mu(x) = -J^mu(x + e_mu); regress on g_nu(x) = E(x) - E(x + e_nu).
  Eigen::MatrixXd G(N, d);
  for (std::size_t x = 0; x < N; ++x)
    for (int nu = 0; nu < d; ++nu) G(x, nu) = E_profile[x] - E_profile[geo.neighbor(x, nu, +1)];
  const Eigen::MatrixXd gram = G.transpose() * G;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  out.condition = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();

  double noise = 0.0;
  for (double s : out.current_stderr) noise = std::max(noise, s);
  // Gradients must stand above the Monte Carlo noise floor and the normal
  // equations must be well conditioned.
  const double grad_rms = std::sqrt(std::max(lo, 0.0) / static_cast<double>(N));
  if (!(lo > 0.0) || out.condition > 1e10 || grad_rms <= 3.0 * noise) {
    out.fit_ok = false;
    out.diagnostic = "ill-conditioned: profile gradients below the noise floor or degenerate";
    return out;
  }
  out.conductivity.assign(d * d, 0.0);
  out.conductivity_stderr.assign(d * d, 0.0);
  const auto ldlt = gram.ldlt();
  std::vector<Eigen::VectorXd> per_sample_kappa;
  for (int mu = 0; mu < d; ++mu) {
    Eigen::VectorXd phi(N);
    for (std::size_t x = 0; x < N; ++x) phi(x) = -out.current[mu * N + geo.neighbor(x, mu, +1)];
    const Eigen::VectorXd k = ldlt.solve(G.transpose() * phi);
    for (int nu = 0; nu < d; ++nu) out.conductivity[mu * d + nu] = k(nu);
    std::vector<std::vector<double>> ks(d);
    for (std::size_t i = 0; i < n_samples; ++i) {
      for (std::size_t x = 0; x < N; ++x) phi(x) = -J[i][mu * N + geo.neighbor(x, mu, +1)];
      const Eigen::VectorXd ki = ldlt.solve(G.transpose() * phi);
      for (int nu = 0; nu < d; ++nu) ks[nu].push_back(ki(nu));
    }
    for (int nu = 0; nu < d; ++nu) out.conductivity_stderr[mu * d + nu] = stderr_of(ks[nu]);
  }
  out.fit_ok = true;
  out.diagnostic = "ok";
  return out;
}

}  // namespace cmldiff
