#include "cmldiff/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <numbers>
#include <optional>
#include <stdexcept>

#include <json.hpp>

#include "cmldiff/csv.hpp"
#include "cmldiff/rng.hpp"
#include "cmldiff/rwre.hpp"
#include "cmldiff/srb.hpp"

namespace cmldiff {

namespace {

double norm2(const Point& x, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += x[i] * x[i];
  return s;
}

using Gradient = std::function<Point(const Point&, int)>;

TestFunction make(std::string name, std::function<double(const Point&, int)> f, const Gradient& grad, int d) {
  TestFunction G{std::move(name), std::move(f), 0.0, 0.0};
  const int per_axis = d == 1 ? 16001 : d == 2 ? 801 : 121;
  std::size_t total = 1;
  for (int i = 0; i < d; ++i) total *= static_cast<std::size_t>(per_axis);
  for (std::size_t idx = 0; idx < total; ++idx) {
    Point x{0, 0, 0};
    std::size_t r = idx;
    for (int i = 0; i < d; ++i) {
      x[i] = -8.0 + 16.0 * static_cast<double>(r % per_axis) / (per_axis - 1);
      r /= per_axis;
    }
    G.sup = std::max(G.sup, std::abs(G.value(x, d)));
    G.grad_sup = std::max(G.grad_sup, std::sqrt(norm2(grad(x, d), d)));
  }
  return G;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

long long ipow_ll(long long b, int e) {
  long long r = 1;
  for (int i = 0; i < e; ++i) r *= b;
  return r;
}

}  // namespace

double gaussian_eval(const GaussianFixedPoint& g, const Point& x) {
  if (!(g.D > 0.0)) throw std::invalid_argument("gaussian_eval: D must be positive");
  const double d = g.d;
  return std::pow(d / (2.0 * std::numbers::pi * g.D), 0.5 * d) * std::exp(-d * norm2(x, g.d) / (2.0 * g.D));
}

std::vector<TestFunction> default_test_functions(int d) {
  std::vector<TestFunction> out;
  out.push_back(make(
      "one", [](const Point&, int) { return 1.0; }, [](const Point&, int) { return Point{0, 0, 0}; }, d));
  out.push_back(make(
      "gauss", [](const Point& x, int dd) { return std::exp(-norm2(x, dd)); },
      [](const Point& x, int dd) {
        const double e = std::exp(-norm2(x, dd));
        return Point{-2 * x[0] * e, -2 * x[1] * e, -2 * x[2] * e};
      },
      d));
  const std::array<Point, 2> ks{Point{1, 0, 0}, Point{2, 1, 0}};
  for (int w = 0; w < 2; ++w) {
    const Point k = ks[w];
    auto f = [k](const Point& x, int dd) {
      double kx = 0.0;
      for (int i = 0; i < dd; ++i) kx += k[i] * x[i];
      return std::cos(kx) * std::exp(-norm2(x, dd) / 16.0);
    };
    auto g = [k](const Point& x, int dd) {
      double kx = 0.0;
      for (int i = 0; i < dd; ++i) kx += k[i] * x[i];
      const double e = std::exp(-norm2(x, dd) / 16.0);
      Point out{0, 0, 0};
      for (int i = 0; i < dd; ++i) out[i] = (-k[i] * std::sin(kx) - x[i] / 8.0 * std::cos(kx)) * e;
      return out;
    };
    out.push_back(make(w == 0 ? "cos1" : "cos2", f, g, d));
  }
  out.push_back(make(
      "bump",
      [](const Point& x, int dd) {
        const double s = norm2(x, dd) / 4.0;
        return s < 1.0 ? std::exp(1.0 - 1.0 / (1.0 - s)) : 0.0;
      },
      [](const Point& x, int dd) {
        const double s = norm2(x, dd) / 4.0;
        Point out{0, 0, 0};
        if (s >= 1.0) return out;
        const double v = std::exp(1.0 - 1.0 / (1.0 - s));
        // d/dx_i of -1/(1-s) is -(x_i / 2) / (1-s)^2.
        for (int i = 0; i < dd; ++i) out[i] = -v * (x[i] / 2.0) / ((1.0 - s) * (1.0 - s));
        return out;
      },
      d));
  return out;
}

double weak_distance(const TestFunction& G, const GaussianFixedPoint& g, const Geometry& geo,
                     std::span<const double> E, double h, std::size_t center, double mass) {
  if (E.size() != geo.sites()) throw std::invalid_argument("weak_distance: size mismatch");
  const int d = geo.dim();
  const Coord c0 = geo.coords(center);
  const double cell = std::pow(h, d);
  CompensatedSum data, gauss;
  for (std::size_t z = 0; z < geo.sites(); ++z) {
    const Coord c = geo.coords(z);
    Point x{0, 0, 0};
    for (int i = 0; i < d; ++i) x[i] = h * geo.min_image(c[i] - c0[i]);
    const double gx = G.value(x, d);
    data.add(gx * E[z]);
    gauss.add(gx * gaussian_eval(g, x));
  }
  return data.value() - mass * cell * gauss.value();
}

bool strictly_decreasing(const std::vector<double>& v, double floor) {
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    const bool both_floor = v[i] <= floor && v[i + 1] <= floor;
    if (!(v[i + 1] < v[i]) && !both_floor) return false;
  }
  return true;
}

WeakDistanceReport scaling_limit_test(const EnergyField& E0, const ScalingLimitConfig& c,
                                      const std::vector<TestFunction>& functions) {
  const Geometry& geo = c.geo;
  require_same(E0.geometry(), geo, "scaling_limit_test");
  const int d = geo.dim();
  c.model.validate();
  c.map.validate();
  if (c.L < 2 || c.n_max < 1) throw std::invalid_argument("scaling_limit_test: need L >= 2 and n_max >= 1");
  if (functions.empty()) throw std::invalid_argument("scaling_limit_test: no test functions");
  const long long Smax = ipow_ll(c.L, c.n_max);
  const int need = min_box_side(d, c.L, c.n_max, c.model);
  if (geo.side() % Smax != 0 || geo.side() < need)
    throw std::invalid_argument("scaling_limit_test: box side must be a multiple of L^n_max and >= " +
                                std::to_string(need));
  if (c.center >= geo.sites()) throw std::invalid_argument("scaling_limit_test: center out of range");
  const double mass = E0.mass();
  if (!(mass > 0.0) || mass > c.mass_limit)
    throw std::invalid_argument("scaling_limit_test: initial mass must lie in (0, mass_limit]");

  WeakDistanceReport rep;
  rep.d = d;
  rep.L = c.L;
  rep.n_max = c.n_max;
  rep.mass = mass;
  for (const auto& G : functions) {
    rep.function_names.push_back(G.name);
    rep.function_sup.push_back(G.sup);
    rep.function_grad_sup.push_back(G.grad_sup);
  }
  if (d == 1) rep.warnings.push_back("d = 1 run: the quenched diffusive limit is established only for d >= 2");

  const auto mean = annealed_kernel(geo, c.model, c.map, 2000, c.burn_in, stream_seed(c.master_seed, "annealed", 0));
  rep.D0 = mean.kernel.diffusion_constant();
  const auto flow = pure_T_flow(mean.kernel, c.L, c.n_max);
  for (const auto& K : flow) rep.mean_kernel_band_distance.push_back(K.grid_band_distance);
  for (int n = 1; n <= c.n_max; ++n)
    rep.mean_kernel_band_sup.push_back(
        gaussian_band_distance(mean.kernel, c.L, n, std::numbers::pi, d == 1 ? 2049 : d == 2 ? 257 : 33));

  std::vector<std::uint64_t> times;
  for (int n = 1; n <= c.n_max; ++n) times.push_back(static_cast<std::uint64_t>(ipow_ll(c.L, 2 * n)));
  const SRBSampler sampler{geo, c.map, c.burn_in, c.master_seed};
  TrajectoryOptions opts;
  opts.snapshot_times = times;
  opts.snapshot_theta = false;

  // Profiles per seed and scale.
  std::vector<std::optional<std::vector<std::vector<double>>>> profiles(c.seeds);
  const auto start = std::chrono::steady_clock::now();
  std::exception_ptr failure;
  const auto ns = static_cast<std::ptrdiff_t>(c.seeds);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t s = 0; s < ns; ++s) {
    if (c.budget_seconds > 0.0) {
      const std::chrono::duration<double> el = std::chrono::steady_clock::now() - start;
      if (el.count() > c.budget_seconds) continue;
    }
    try {
      const auto tr = run_trajectory(E0, sampler.sample(static_cast<std::uint64_t>(s)), c.model, c.map, times.back(), opts);
      std::vector<std::vector<double>> p;
      for (const auto& snap : tr.snapshots) p.emplace_back(snap.E.values().begin(), snap.E.values().end());
      profiles[s] = std::move(p);
    } catch (...) {
#pragma omp critical(verify_failure)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);

  std::vector<Profile> deepest;
  for (std::size_t s = 0; s < c.seeds; ++s) {
    if (!profiles[s]) {
      rep.complete = false;
      continue;
    }
    rep.seeds.push_back(s);
    deepest.push_back(Profile{geo, 1.0 / static_cast<double>(Smax), profiles[s]->back(), c.center});
  }
  if (deepest.empty()) {
    rep.complete = false;
    return rep;
  }
  rep.D_hat = estimate_effective_D(deepest);

  const std::size_t nG = functions.size();
  std::vector<std::vector<std::vector<double>>> dist(nG, std::vector<std::vector<double>>(c.n_max));
  std::vector<std::size_t> decreasing(nG, 0);
  for (std::size_t k = 0; k < rep.seeds.size(); ++k) {
    const std::size_t s = rep.seeds[k];
    // Each environment is compared with its own quenched diffusion constant.
    const double Ds = estimate_effective_D(deepest[k]).D;
    rep.seed_D.push_back(Ds);
    const GaussianFixedPoint gstar{d, Ds};
    std::vector<std::vector<double>> per_g(nG);
    for (int n = 1; n <= c.n_max; ++n) {
      const double h = 1.0 / static_cast<double>(ipow_ll(c.L, n));
      const auto& E = (*profiles[s])[n - 1];
      for (std::size_t g = 0; g < nG; ++g) {
        const double v = weak_distance(functions[g], gstar, geo, E, h, c.center, mass);
        rep.rows.push_back({s, n, functions[g].name, v});
        dist[g][n - 1].push_back(std::abs(v));
        per_g[g].push_back(std::abs(v));
      }
    }
    for (std::size_t g = 0; g < nG; ++g)
      if (strictly_decreasing(per_g[g], c.trend_floor)) ++decreasing[g];
  }

  for (std::size_t g = 0; g < nG; ++g) {
    std::vector<double> med;
    for (int n = 0; n < c.n_max; ++n) med.push_back(median(dist[g][n]));
    rep.median_decreasing.push_back(strictly_decreasing(med, c.trend_floor));
    rep.medians.push_back(std::move(med));
    rep.trend_fraction.push_back(static_cast<double>(decreasing[g]) / static_cast<double>(rep.seeds.size()));
  }

  if (c.model.eps_prime == 0.0) {
    const GaussianFixedPoint gstar{d, rep.seed_D.front()};
    for (std::size_t g = 0; g < nG; ++g) {
      std::vector<double> o;
      for (int n = 1; n <= c.n_max; ++n) {
        const auto E = circular_convolve(geo, flow[n - 1].prob, E0.values());
        const double h = 1.0 / static_cast<double>(ipow_ll(c.L, n));
        o.push_back(std::abs(weak_distance(functions[g], gstar, geo, E, h, c.center, mass)));
      }
      rep.oracle.push_back(std::move(o));
    }
  }
  return rep;
}

void write_report_json(std::ostream& out, const WeakDistanceReport& r) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["d"] = r.d;
  j["L"] = r.L;
  j["n_max"] = r.n_max;
  j["mass"] = r.mass;
  j["complete"] = r.complete;
  j["seeds"] = r.seeds;
  auto& fs = j["test_functions"] = nlohmann::ordered_json::array();
  for (std::size_t g = 0; g < r.function_names.size(); ++g) {
    nlohmann::ordered_json f;
    f["name"] = r.function_names[g];
    f["sup"] = r.function_sup[g];
    f["grad_sup"] = r.function_grad_sup[g];
    if (g < r.medians.size()) {
      f["median_distance"] = r.medians[g];
      f["trend_fraction"] = r.trend_fraction[g];
      f["median_decreasing"] = static_cast<bool>(r.median_decreasing[g]);
    }
    if (g < r.oracle.size()) f["oracle_distance"] = r.oracle[g];
    fs.push_back(f);
  }
  j["D_hat"] = {{"D", r.D_hat.D},
                {"moment_D", r.D_hat.moment_D},
                {"fit_D", r.D_hat.fit_D},
                {"uncertainty", r.D_hat.uncertainty},
                {"fit_ok", r.D_hat.fit_ok}};
  j["seed_D"] = r.seed_D;
  j["D0"] = r.D0;
  j["mean_kernel_band_distance"] = r.mean_kernel_band_distance;
  j["mean_kernel_band_sup"] = r.mean_kernel_band_sup;
  j["warnings"] = r.warnings;
  out << j.dump(2) << "\n";
}

void write_report_csv(std::ostream& out, const WeakDistanceReport& r) {
  CsvWriter w(out, {"seed", "n", "G", "value", "distance"});
  for (const auto& row : r.rows)
    w.row({std::to_string(row.seed), std::to_string(row.n), row.function, format_double(row.value),
           format_double(std::abs(row.value))});
}

}  // namespace cmldiff
