#pragma once

// Cell norms, the graph length tau of a site set, and simplified exponentially
// weighted kernel norms.

#include <span>
#include <vector>

#include "cmldiff/geometry.hpp"
#include "cmldiff/kernel_matrix.hpp"

namespace cmldiff {

struct TauResult {
  long long value = 0;
  /// False when the set is too large for exact search and `value` is the
  /// minimum-spanning-tree upper bound.
  bool exact = true;
};

/// Minimal number of nearest-neighbour edges of a connected subgraph of Z^d
/// containing every site of C (rectilinear Steiner tree length). Exact for
/// |C| <= kTauExactLimit, MST upper bound beyond. Throws on empty C.
inline constexpr std::size_t kTauExactLimit = 6;
TauResult tau(std::span<const Coord> C, int d);

/// sup over x in cell u, y in cell v of |b(x, y)|; cells are boxes of side `cell_side`.
double cell_norm(const SparseKernel& b, const Coord& u, const Coord& v, int cell_side);

enum class NormWeight { TwoPoint, Tau };

struct WeightedNormParams {
  double lambda = 0.5;
  NormWeight mode = NormWeight::TwoPoint;
  double lambda_max = 8.0;
};

/// sup_v sum_u ||b||_{u,v} exp(lambda w(u, v)) with w the periodic l1 distance
/// between cells (TwoPoint) or tau({u, v}) (Tau; the same number for pairs).
/// This is the weighted norm with no large-field decomposition.
double weighted_kernel_norm_simplified(const SparseKernel& b, int cell_side, const WeightedNormParams& params);

struct DecayFit {
  double C = 0.0;
  double m = 0.0;
  /// RMS residual of the log-linear fit.
  double residual = 0.0;
  /// Standard error of m from the regression.
  double m_stderr = 0.0;
  /// m <= 0 (up to 1e-12).
  bool no_decay = false;
  /// All values zero: decay is vacuously infinite, m = +inf.
  bool vacuous = false;
  std::size_t points = 0;
};

/// Least squares of log|value| against distance over the positive entries.
/// Throws when fewer than 3 distinct distances carry positive values, unless
/// every value is zero.
DecayFit decay_rate_fit(std::span<const double> distances, std::span<const double> values);

}  // namespace cmldiff
