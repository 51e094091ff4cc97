#pragma once

// Position-space kernels k(x, y) on a periodic box, stored by column y.

#include <span>
#include <vector>

#include "cmldiff/geometry.hpp"

namespace cmldiff {

/// Compressed sparse columns: the entries of column y are rows[col_start[y] .. col_start[y+1]).
class SparseKernel {
 public:
  struct Entry {
    std::size_t row;
    double value;
  };

  SparseKernel() = default;
  explicit SparseKernel(Geometry geo) : geo_(geo), col_start_(geo.sites() + 1, 0) {}
  /// Builds from per-column entry lists.
  SparseKernel(Geometry geo, const std::vector<std::vector<Entry>>& columns);

  struct Triplet {
    std::size_t row;
    std::size_t col;
    double value;
  };
  /// Builds from unordered (row, col, value) triplets by a counting sort on col.
  static SparseKernel from_triplets(Geometry geo, std::span<const Triplet> triplets);

  const Geometry& geometry() const { return geo_; }
  std::span<const Entry> column(std::size_t y) const {
    return {entries_.data() + col_start_[y], entries_.data() + col_start_[y + 1]};
  }
  std::size_t nonzeros() const { return entries_.size(); }

  /// out(x) = sum_y k(x, y) in(y).
  void apply(std::span<const double> in, std::span<double> out) const;
  /// Largest |sum_x k(x, y)| - target| over columns.
  double column_sum_deviation(double target) const;

 private:
  Geometry geo_;
  std::vector<std::size_t> col_start_;
  std::vector<Entry> entries_;
};

/// Dense column-major kernel: entry (x, y) at data[y * N + x]. For small boxes
/// only (tests, oracles, exact composition of slices).
class DenseKernel {
 public:
  DenseKernel() = default;
  explicit DenseKernel(Geometry geo) : geo_(geo), data_(geo.sites() * geo.sites(), 0.0) {}
  static DenseKernel identity(Geometry geo);
  static DenseKernel from_sparse(const SparseKernel& k);

  const Geometry& geometry() const { return geo_; }
  std::size_t size() const { return geo_.sites(); }
  double operator()(std::size_t x, std::size_t y) const { return data_[y * size() + x]; }
  double& operator()(std::size_t x, std::size_t y) { return data_[y * size() + x]; }
  std::span<const double> column(std::size_t y) const { return {data_.data() + y * size(), size()}; }
  std::span<double> column(std::size_t y) { return {data_.data() + y * size(), size()}; }
  std::span<const double> data() const { return data_; }

  /// (this * rhs)(x, y) = sum_z this(x, z) rhs(z, y).
  DenseKernel compose(const DenseKernel& rhs) const;
  double column_sum_deviation(double target) const;
  double max_abs_diff(const DenseKernel& other) const;

 private:
  Geometry geo_;
  std::vector<double> data_;
};

}  // namespace cmldiff
