#pragma once

// Weak (test-function) comparison of rescaled evolved energy profiles with the
// Gaussian fixed point.

#include <functional>
#include <ostream>
#include <string>
#include <vector>

#include "cmldiff/lattice.hpp"
#include "cmldiff/rg.hpp"

namespace cmldiff {

/// T*_D(x) = (d / 2 pi D)^(d/2) exp(-d |x|^2 / 2D); second moment sum |x|^2 T* = D.
struct GaussianFixedPoint {
  int d = 1;
  double D = 0.5;
};

/// Throws std::invalid_argument when D <= 0.
double gaussian_eval(const GaussianFixedPoint& g, const std::array<double, kMaxDim>& x);

using Point = std::array<double, kMaxDim>;

struct TestFunction {
  std::string name;
  std::function<double(const Point&, int d)> value;
  /// Sampled on [-8, 8]^d together with the closed-form gradient.
  double sup = 0.0;
  double grad_sup = 0.0;
};

/// {1, exp(-|x|^2), cos(k.x) exp(-|x|^2 / 16) for k = e_1 and k = (2, 1, 0),
/// a C-infinity bump supported in |x| < 2}.
std::vector<TestFunction> default_test_functions(int d);

/// sum_z G(x_z) E(z) - mass * h^d sum_z G(x_z) T*(x_z), x_z = h * (z - center):
/// the weak distance integral with the midpoint rule on the grid of spacing h.
double weak_distance(const TestFunction& G, const GaussianFixedPoint& g, const Geometry& geo,
                     std::span<const double> E, double h, std::size_t center, double mass);

struct ScalingLimitConfig {
  Geometry geo{1, 640};
  CurrentModel model{0.25, 1.0 / 16};
  LocalChaoticMap map{MapVariant::Doubling, 0.05};
  int L = 4;
  int n_max = 3;
  std::size_t seeds = 32;
  std::uint64_t master_seed = 0;
  std::uint64_t burn_in = 64;
  /// Test functions and the Gaussian are centred on this site.
  std::size_t center = 0;
  /// Upper bound on the initial mass.
  double mass_limit = 1.0;
  /// Distances below this count as zero when judging a decrease. The box
  /// rule leaves Gaussian tails of up to ~1e-9 outside the box.
  double trend_floor = 1e-8;
  double budget_seconds = 0.0;
};

struct WeakDistanceRow {
  std::uint64_t seed = 0;
  int n = 0;
  std::string function;
  /// Signed integral; distance = |value|.
  double value = 0.0;
};

struct WeakDistanceReport {
  int d = 1;
  int L = 2;
  int n_max = 1;
  double mass = 0.0;
  std::vector<std::string> function_names;
  std::vector<double> function_sup;
  std::vector<double> function_grad_sup;
  std::vector<std::uint64_t> seeds;
  std::vector<WeakDistanceRow> rows;
  /// Pooled estimate from all seeds at the deepest scale.
  DEstimate D_hat;
  /// Per-seed estimate at the deepest scale; seed k's distances use seed_D[k].
  std::vector<double> seed_D;
  /// Diffusion constant of the mean kernel, and its pure flow's band distance per n.
  double D0 = 0.0;
  std::vector<double> mean_kernel_band_distance;
  /// Same against the continuous symbol over |k|_inf <= pi.
  std::vector<double> mean_kernel_band_sup;
  /// medians[g][n - 1] of |value| over seeds.
  std::vector<std::vector<double>> medians;
  /// For eps' = 0: |value| from the mean kernel convolved with E0 (all seeds coincide).
  std::vector<std::vector<double>> oracle;
  /// Fraction of seeds whose |value| decreases strictly over n (floor rule), per g.
  std::vector<double> trend_fraction;
  /// Whether medians[g] decreases strictly over n (floor rule).
  std::vector<bool> median_decreasing;
  std::vector<std::string> warnings;
  bool complete = true;
};

/// Runs the coupled dynamics from E0 for L^(2 n_max) steps per seed (theta
/// drawn from the sampled invariant measure), rescales at t = L^2n and
/// integrates each G against the difference to mass * T*_D, with D the
/// second-moment estimate of that seed at the deepest scale. Throws
/// std::invalid_argument on a box below min_box_side or mass above the limit.
WeakDistanceReport scaling_limit_test(const EnergyField& E0, const ScalingLimitConfig& config,
                                      const std::vector<TestFunction>& functions);

/// a < b strictly, or both at or below the floor.
bool strictly_decreasing(const std::vector<double>& v, double floor);

void write_report_json(std::ostream& out, const WeakDistanceReport& r);
void write_report_csv(std::ostream& out, const WeakDistanceReport& r);

}  // namespace cmldiff
