#pragma once

// The random walk in a random environment obtained by linearizing the energy
// update at E = 0, its annealed mean kernel, fluctuations, and runtime
// validators for the structural assumptions on the walk.

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cmldiff/fourier.hpp"
#include "cmldiff/kernel_matrix.hpp"
#include "cmldiff/lattice.hpp"
#include "cmldiff/norms.hpp"

namespace cmldiff {

/// Parameters that generated an environment, kept for export.
struct EnvironmentInfo {
  CurrentModel model;
  LocalChaoticMap map;
  std::uint64_t seed = 0;
};

/// Time-indexed column-stochastic kernels p_t(x, y), t in [0, t_max), stored as
/// nearest-neighbour column stencils (time-major, then site, then slot).
class EnvironmentKernel {
 public:
  EnvironmentKernel() = default;
  /// Checks nonnegativity and that every column sums to one within 1e-14.
  EnvironmentKernel(Geometry geo, std::uint64_t t_max, std::vector<double> stencils, EnvironmentInfo info = {});

  const Geometry& geometry() const { return geo_; }
  std::uint64_t t_max() const { return t_max_; }
  int width() const { return stencil_width(geo_.dim()); }
  const EnvironmentInfo& info() const { return info_; }
  std::span<const double> slice(std::uint64_t t) const;
  std::span<const double> data() const { return stencils_; }

  /// p_t(x, y) for x = y + s e_axis (s in {-1, 0, +1}; axis ignored for s = 0).
  double weight(std::uint64_t t, std::size_t y, int axis, int s) const;
  /// out = p_t in.
  void apply(std::uint64_t t, std::span<const double> in, std::span<double> out) const;
  SparseKernel sparse_slice(std::uint64_t t) const;
  double max_column_sum_deviation() const;

 private:
  Geometry geo_;
  std::uint64_t t_max_ = 0;
  std::vector<double> stencils_;
  EnvironmentInfo info_;
};

/// Closed-form derivative of the exchange update at E = 0 along a theta
/// trajectory: p_t(y, y) = 1 - sum of outgoing rates, p_t(y + s e_mu, y) = the
/// rate from y towards y + s e_mu. Exactly linear, so no fallback is needed.
EnvironmentKernel linearize_at_zero(std::span<const ThetaField> trajectory, const CurrentModel& model,
                                    const LocalChaoticMap& map = {}, std::uint64_t seed = 0);

/// Streams theta from theta0 for t_max steps and linearizes along the way.
EnvironmentKernel generate_environment(const ThetaField& theta0, const LocalChaoticMap& map, const CurrentModel& model,
                                       std::uint64_t t_max, std::uint64_t seed = 0);

/// Central finite-difference Jacobian d f(x) / d E(y) of the unchecked update at
/// base point E, step h.
DenseKernel finite_difference_jacobian(const ThetaField& theta, const CurrentModel& model,
                                       std::span<const double> base, double h);

struct AnnealedKernelEstimate {
  /// Point-group symmetrized mean kernel.
  TranslationKernel kernel;
  /// Unsymmetrized mean stencil (slot 0 recomputed as 1 - sum of hops) and its kernel.
  std::vector<double> raw_stencil;
  TranslationKernel raw_kernel;
  /// Standard error per stencil slot.
  std::vector<double> std_error;
  /// Largest |raw - symmetrized| / std_error over slots.
  double symmetry_correction_sigmas = 0.0;
  /// Set when the correction exceeds 3 standard errors.
  bool symmetry_warning = false;
  std::size_t samples = 0;
};

/// Monte Carlo mean of p_0 over SRB-sampled theta (per-sample site averages,
/// then sample mean). With eps' = 0 the exact hopping kernel is returned with
/// zero errors.
AnnealedKernelEstimate annealed_kernel(const Geometry& geo, const CurrentModel& model, const LocalChaoticMap& map,
                                       std::size_t n_samples, std::uint64_t burn_in, std::uint64_t master_seed);

/// delta_t = p_t - T, plus in d = 1 the bond field b_t with
/// b_t(x + 1, y) - b_t(x, y) = delta_t(x, y).
class FluctuationField {
 public:
  const Geometry& geometry() const { return geo_; }
  std::uint64_t t_max() const { return t_max_; }
  /// delta stencils, same layout as EnvironmentKernel.
  std::span<const double> delta_slice(std::uint64_t t) const;
  SparseKernel delta_sparse(std::uint64_t t) const;
  bool has_bonds() const { return !bonds_.empty(); }
  /// d = 1 only: b_t as a sparse kernel (entries at x = y and x = y + 1).
  SparseKernel bond_sparse(std::uint64_t t) const;
  /// max |b(x+1, y) - b(x, y) - delta(x, y)| over all t, x, y (d = 1).
  double bond_reconstruction_error() const;

  friend FluctuationField fluctuation_split(const EnvironmentKernel& env, const TranslationKernel& T);

 private:
  Geometry geo_;
  std::uint64_t t_max_ = 0;
  std::vector<double> delta_;
  // per (t, y): b(y, y), b(y + 1, y)
  std::vector<double> bonds_;
};

/// Requires T to be supported on the nearest-neighbour stencil. The bond field
/// is anchored per column at x = y - 1: b(y, y) = delta(y-1, y),
/// b(y+1, y) = -delta(y+1, y), zero elsewhere. Not built for d >= 2.
FluctuationField fluctuation_split(const EnvironmentKernel& env, const TranslationKernel& T);

/// Applies p_0 .. p_{t-1} to E0. Throws std::out_of_range when t > t_max.
EnergyField quenched_evolve(const EnergyField& E0, const EnvironmentKernel& env, std::uint64_t t);

struct AssumptionCheck {
  std::string name;
  bool passed = false;
  double statistic = 0.0;
  double threshold = 0.0;
  std::string detail;
};

struct AssumptionReport {
  /// (i) positivity, (ii) conservation, (iii) symmetry, (iv) decay,
  /// (v) aperiodicity of T, (vi) weak randomness.
  std::array<AssumptionCheck, 6> checks;
  bool all_passed() const;
  std::vector<std::string> failed() const;
};

struct ValidationOptions {
  Geometry geo{1, 32};
  std::size_t n_samples = 200;
  std::uint64_t burn_in = 64;
  std::uint64_t master_seed = 0;
  /// Time slices per sample examined by the weak-randomness check.
  std::uint64_t t_steps = 8;
  double lambda = 0.5;
  /// (vi) passes when sup_t ||delta_t||_lambda <= weak_ratio * ||T - 1||_lambda.
  double weak_ratio = 0.5;
  double fd_step = 1e-6;
};

/// Runs the six checks; failures are reported, never thrown.
AssumptionReport validate_assumptions(const CurrentModel& model, const LocalChaoticMap& map,
                                      const ValidationOptions& options);

struct AnnealedDiffusion {
  /// Mean bond current J^mu(x) over samples, layout [axis][site], and its standard error.
  std::vector<double> current;
  std::vector<double> current_stderr;
  /// Least-squares conductivity kappa_{mu nu} (row-major d x d) in
  /// phi_mu(x) = sum_nu kappa_{mu nu} (E(x) - E(x + e_nu)).
  std::vector<double> conductivity;
  std::vector<double> conductivity_stderr;
  bool fit_ok = false;
  /// Ratio of extreme eigenvalues of the regression Gram matrix.
  double condition = 0.0;
  std::string diagnostic;
  std::size_t samples = 0;
};

AnnealedDiffusion annealed_current(const CurrentModel& model, const LocalChaoticMap& map, const EnergyField& E_profile,
                                   std::size_t n_samples, std::uint64_t burn_in, std::uint64_t master_seed);

/// Little-endian binary container: magic "CMLENV01", u32 version, u32 d, u32 M,
/// u64 t_max, f64 a, f64 eps', f64 kappa, u32 map variant, u32 noise kind,
/// u32 refresh flag, u64 seed, u32 stencil width, then t_max * M^d * width f64
/// weights (time, site, slot).
void save_environment(const std::filesystem::path& path, const EnvironmentKernel& env);
EnvironmentKernel load_environment(const std::filesystem::path& path);

}  // namespace cmldiff
