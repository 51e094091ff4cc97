#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cmldiff {

inline constexpr int kMaxDim = 3;

using Coord = std::array<int, kMaxDim>;

/// Periodic box of side M in d dimensions. Sites are stored row-major with
/// axis 0 fastest: index = x0 + M*x1 + M*M*x2.
class Geometry {
 public:
  Geometry() = default;
  Geometry(int d, int M) : d_(d), M_(M) {
    if (d < 1 || d > kMaxDim) throw std::invalid_argument("Geometry: d must be 1, 2 or 3");
    if (M < 2) throw std::invalid_argument("Geometry: M must be >= 2");
    sites_ = 1;
    for (int i = 0; i < d; ++i) sites_ *= static_cast<std::size_t>(M);
    stride_ = {1, 1, 1};
    for (int i = 1; i < d; ++i) stride_[i] = stride_[i - 1] * static_cast<std::size_t>(M);
  }

  int dim() const { return d_; }
  int side() const { return M_; }
  std::size_t sites() const { return sites_; }
  std::size_t stride(int axis) const { return stride_[axis]; }

  int wrap(int x) const {
    int r = x % M_;
    return r < 0 ? r + M_ : r;
  }

  /// Minimal-image representative of a displacement, in [-M/2, M/2).
  int min_image(int delta) const {
    const int r = wrap(delta);
    return 2 * r >= M_ ? r - M_ : r;
  }

  Coord coords(std::size_t idx) const {
    Coord c{0, 0, 0};
    for (int i = 0; i < d_; ++i) {
      c[i] = static_cast<int>(idx % static_cast<std::size_t>(M_));
      idx /= static_cast<std::size_t>(M_);
    }
    return c;
  }

  std::size_t index(const Coord& c) const {
    std::size_t idx = 0;
    for (int i = d_ - 1; i >= 0; --i) idx = idx * static_cast<std::size_t>(M_) + static_cast<std::size_t>(wrap(c[i]));
    return idx;
  }

  /// Neighbour of `idx` displaced by `step` (+1 or -1) along `axis`.
  std::size_t neighbor(std::size_t idx, int axis, int step) const {
    const std::size_t s = stride_[axis];
    const std::size_t x = (idx / s) % static_cast<std::size_t>(M_);
    if (step > 0) return x + 1 == static_cast<std::size_t>(M_) ? idx + s - s * M_ : idx + s;
    return x == 0 ? idx + s * (M_ - 1) : idx - s;
  }

  /// Site reached from `idx` by the displacement `u` (periodic).
  std::size_t translate(std::size_t idx, const Coord& u) const {
    Coord c = coords(idx);
    for (int i = 0; i < d_; ++i) c[i] += u[i];
    return index(c);
  }

  /// Minimal-image displacement of site `idx` relative to the origin.
  Coord displacement(std::size_t idx) const {
    Coord c = coords(idx);
    for (int i = 0; i < d_; ++i) c[i] = min_image(c[i]);
    return c;
  }

  friend bool operator==(const Geometry& a, const Geometry& b) { return a.d_ == b.d_ && a.M_ == b.M_; }

 private:
  int d_ = 1;
  int M_ = 2;
  std::size_t sites_ = 2;
  std::array<std::size_t, kMaxDim> stride_{1, 1, 1};
};

inline void require_same(const Geometry& a, const Geometry& b, const char* what) {
  if (!(a == b)) throw std::invalid_argument(std::string(what) + ": geometry mismatch");
}

inline int l1_norm(const Coord& c, int d) {
  int s = 0;
  for (int i = 0; i < d; ++i) s += c[i] < 0 ? -c[i] : c[i];
  return s;
}

inline long long squared_norm(const Coord& c, int d) {
  long long s = 0;
  for (int i = 0; i < d; ++i) s += static_cast<long long>(c[i]) * c[i];
  return s;
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double v) {
    const double t = sum_ + v;
    if (std::abs(sum_) >= std::abs(v))
      comp_ += (sum_ - t) + v;
    else
      comp_ += (v - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

double compensated_total(std::span<const double> values);

}  // namespace cmldiff
