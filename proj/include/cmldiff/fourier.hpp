#pragma once

// Discrete Fourier transforms on the periodic box and translation-invariant
// probability kernels. Convention: f^(k) = sum_x f(x) exp(-i k.x) with
// k = 2 pi j / M per axis.

#include <array>
#include <complex>
#include <cstdint>
#include <span>
#include <vector>

#include "cmldiff/geometry.hpp"

namespace cmldiff {

using cplx = std::complex<double>;
using Wavevector = std::array<double, kMaxDim>;

std::vector<cplx> fft_forward(const Geometry& geo, std::span<const double> f);
std::vector<cplx> fft_forward(const Geometry& geo, std::span<const cplx> f);
/// Inverse with the 1/M^d normalization.
std::vector<cplx> fft_inverse(const Geometry& geo, std::span<const cplx> f);
std::vector<double> fft_inverse_real(const Geometry& geo, std::span<const cplx> f);

/// Lattice wavevector of dual-grid index j: 2 pi * min_image(j_mu) / M.
Wavevector dual_wavevector(const Geometry& geo, std::size_t j);

/// z^n by repeated squaring.
cplx ipow(cplx z, std::uint64_t n);

/// Periodic convolution (a * b)(x) = sum_y a(x - y) b(y), via the transform.
std::vector<double> circular_convolve(const Geometry& geo, std::span<const double> a, std::span<const double> b);

/// Translation-invariant kernel T(u) on the periodic box: values[idx] is T at
/// the displacement of site idx from the origin. Nonnegative, sums to one.
class TranslationKernel {
 public:
  TranslationKernel() = default;
  /// Entries down to -1e-12 are accepted as rounding and clamped to zero;
  /// the total must be within 1e-12 of one.
  TranslationKernel(Geometry geo, std::vector<double> values);

  /// T(0) = 1 - 2da, T(+-e_mu) = a.
  static TranslationKernel hopping(Geometry geo, double a);
  /// Kernel from a nearest-neighbour stencil (slot 0 retention, stencil_slot order).
  static TranslationKernel from_stencil(Geometry geo, std::span<const double> stencil);

  const Geometry& geometry() const { return geo_; }
  std::span<const double> values() const { return values_; }
  double at(const Coord& u) const { return values_[geo_.index(u)]; }

  /// Transform on the dual grid, computed once at construction.
  const std::vector<cplx>& hat() const { return hat_; }
  /// Trigonometric polynomial sum_u T(u) exp(-i k.u) at an arbitrary k,
  /// with u the minimal-image displacement.
  cplx symbol(const Wavevector& k) const;

  /// sum_u |u|^2 T(u) over minimal-image displacements.
  double diffusion_constant() const;
  /// Largest |T(u) - T(g u)| over the lattice point group.
  double asymmetry() const;
  /// Largest minimal-image l1 radius of the support.
  int support_radius() const;

 private:
  Geometry geo_;
  std::vector<double> values_;
  std::vector<cplx> hat_;
  std::vector<std::pair<Coord, double>> support_;
};

inline double diffusion_constant(const TranslationKernel& T) { return T.diffusion_constant(); }

/// Signed axis permutations of Z^d (the hyperoctahedral group, d! 2^d elements).
struct PointGroupElement {
  std::array<int, kMaxDim> perm{0, 1, 2};
  std::array<int, kMaxDim> sign{1, 1, 1};
  Coord apply(const Coord& u) const {
    Coord v{0, 0, 0};
    for (int i = 0; i < kMaxDim; ++i) v[perm[i]] = sign[i] * u[i];
    return v;
  }
};
std::vector<PointGroupElement> point_group(int d);

/// Average of f(g u) over the point group.
std::vector<double> symmetrize(const Geometry& geo, std::span<const double> f);

}  // namespace cmldiff
