#pragma once

// Diffusive rescaling, the renormalization map on kernels, the Fourier flow
// of the mean kernel, the linear fluctuation operator and diffusion-constant
// estimation.
//
// Scale convention: a field at scale n lives on the same M^d index set as the
// lattice, with spacing L^-n; its integral is L^-nd times the plain sum.
// Rescaling by L is therefore a relabelling plus the density factor L^d.

#include <limits>
#include <span>
#include <vector>

#include "cmldiff/fourier.hpp"
#include "cmldiff/kernel_matrix.hpp"
#include "cmldiff/lattice.hpp"
#include "cmldiff/rwre.hpp"

namespace cmldiff {

/// Density on the refined grid (grid_factor^-1 Z)^d restricted to the box.
struct ScaledField {
  Geometry geo;
  /// Product of all scale factors applied so far; spacing = 1 / grid_factor.
  long long grid_factor = 1;
  int n = 0;
  std::vector<double> values;

  static ScaledField from_energy(const EnergyField& E);
  double spacing() const { return 1.0 / static_cast<double>(grid_factor); }
  /// Integral with the grid convention: spacing^d * sum.
  double mass() const;
};

/// (S_L E)(x) = L^d E(L x). Throws unless grid_factor * L divides M.
ScaledField scale_field(const ScaledField& E, int L);

/// Smallest admissible box side for a flow to depth n: six standard
/// deviations of the walk on each side, M >= 12 L^n sqrt(D0max / d) + 1 with
/// D0max = 2d(a + eps'), rounded up to a multiple of L^n.
int min_box_side(int d, int L, int n, const CurrentModel& model);

/// Mean kernel after n renormalization steps, T_n = T^(L^2n) viewed at scale n.
struct FourierKernel {
  int n = 0;
  int L = 2;
  Geometry geo;
  /// T_n^ on the dual grid; index j carries the wavevector 2 pi j L^n / M.
  std::vector<cplx> hat;
  /// Position space: probability per site (density = L^nd * prob).
  std::vector<double> prob;
  double D0 = 0.0;
  /// sup over dual-grid k with |k|_inf <= pi of |T_n^(k) - exp(-D0 |k|^2 / 2d)|.
  double grid_band_distance = 0.0;
  /// max over nonzero k of |T^(k)| < 1 for the input kernel.
  bool aperiodic = true;
};

/// T_1 .. T_n by exact exponentiation on the dual grid.
std::vector<FourierKernel> pure_T_flow(const TranslationKernel& T, int L, int n);

/// sup over |k|_inf <= kmax of |T^(k / L^n)^(L^2n) - exp(-D0 |k|^2 / 2d)| using
/// the continuous symbol, on `samples` points per axis.
double gaussian_band_distance(const TranslationKernel& T, int L, int n, double kmax, int samples = 2049);

/// p' = p_{L^2} ... p_1 from the first L^2 slices (p_1 applied first). The
/// result is the kernel at the next scale in the relabelling convention.
DenseKernel rg_kernel_step(std::span<const DenseKernel> slices, int L);
/// Same for the L^2 environment slices starting at t0.
DenseKernel rg_kernel_step(const EnvironmentKernel& env, int L, std::uint64_t t0 = 0);
/// n successive RG steps on the first L^2n environment slices.
DenseKernel rg_flow_dense(const EnvironmentKernel& env, int L, int n);

/// T^j for j = 0 .. count - 1 as displacement kernels (values[site]).
std::vector<std::vector<double>> t_powers(const TranslationKernel& T, int count);

/// (Lb)(x', y') = L^(d-1) sum_i sum_{x,y} T^(L^2-i-1)(L x' - x) b_i(x, y) T^i(y - L y')
/// for the window b_0 .. b_{L^2-1}. x', y' are coarse coordinates; L x' is
/// the fine site reached by scaling. Throws on window-length mismatch.
double linear_L_entry(std::span<const SparseKernel> window, const std::vector<std::vector<double>>& powers, int L,
                      const Coord& x_coarse, const Coord& y_coarse);
/// All entries on the coarse box of side M / L (small boxes only).
DenseKernel linear_L_apply(std::span<const SparseKernel> window, const std::vector<std::vector<double>>& powers,
                           int L);

/// Mass distribution on the box around a reference site, at lattice spacing `spacing`.
struct Profile {
  Geometry geo;
  double spacing = 1.0;
  /// Mass per site.
  std::vector<double> weights;
  std::size_t origin = 0;
};

struct DEstimate {
  /// Point estimate: the second-moment value.
  double D = 0.0;
  double moment_D = 0.0;
  double fit_D = 0.0;
  /// |moment_D - fit_D|, or the spread over profiles when several are given.
  double uncertainty = 0.0;
  bool fit_ok = false;
  /// Relative L2 residual of the Gaussian fit.
  double fit_residual = 0.0;
};

/// D from sum |x - mean|^2 rho / (mass * t_eff) (for the fixed point
/// (d / 2 pi D)^(d/2) exp(-d x^2 / 2D) this is exactly D), plus a least-squares
/// fit of that profile over D. Throws on negative, non-finite or zero mass.
DEstimate estimate_effective_D(const Profile& profile, double t_eff = 1.0);
/// Average over several profiles; the uncertainty includes their spread.
DEstimate estimate_effective_D(std::span<const Profile> profiles, double t_eff = 1.0);

struct RGExperimentConfig {
  Geometry geo{1, 640};
  CurrentModel model{0.25, 1.0 / 16};
  LocalChaoticMap map{MapVariant::Doubling, 0.05};
  int L = 4;
  int n_max = 3;
  std::size_t seeds = 32;
  std::uint64_t master_seed = 0;
  /// Source columns per environment, spaced evenly along axis 0.
  std::size_t sources = 8;
  /// Cells with |u|_inf <= window_cells enter the fluctuation statistic.
  int window_cells = 2;
  std::uint64_t burn_in = 64;
  std::size_t annealed_samples = 2000;
  /// Wall-clock budget; 0 means unlimited.
  double budget_seconds = 0.0;
};

/// One row per (seed, n).
struct RGFlowRecord {
  std::uint64_t seed = 0;
  int n = 0;
  int L = 0;
  /// Second-moment diffusion constant of the source-averaged kernel, rescaled.
  double D_n = 0.0;
  /// RMS over sources and window cells of the cell-integrated p_n - T_n.
  double eps_n = 0.0;
  /// sup over the band |k|_inf <= pi of |p_n^(k) - exp(-D0 k^2 / 2d)|.
  double gauss_sup_dist = 0.0;
  /// max over sources of |sum_x p_n(x, y) - 1|.
  double mass_err = 0.0;
  /// Source-averaged kernel p_n(y + z, y) as a displacement kernel (probabilities).
  std::vector<double> kernel;
};

struct RGExperimentResult {
  TranslationKernel T;
  double D0 = 0.0;
  std::vector<RGFlowRecord> records;
  std::size_t seeds_completed = 0;
  bool complete = true;
};

/// For each seed: SRB theta, stream the environment for L^(2 n_max) steps, evolve
/// the source columns, and record each scale n = 1 .. n_max. Seeds run in
/// parallel; seeds not started when the budget runs out are skipped.
RGExperimentResult full_rg_experiment(const RGExperimentConfig& config);

/// Records for one environment given its initial theta and the mean kernel T.
std::vector<RGFlowRecord> rg_flow_single(const ThetaField& theta0, const RGExperimentConfig& config,
                                         const TranslationKernel& T, std::uint64_t seed);

}  // namespace cmldiff
