#include "cmldiff/kernel_matrix.hpp"

#include <algorithm>
#include <stdexcept>

namespace cmldiff {

SparseKernel::SparseKernel(Geometry geo, const std::vector<std::vector<Entry>>& columns) : geo_(geo) {
  if (columns.size() != geo.sites()) throw std::invalid_argument("SparseKernel: one entry list per column expected");
  col_start_.reserve(columns.size() + 1);
  col_start_.push_back(0);
  for (const auto& col : columns) {
    for (const auto& e : col) {
      if (e.row >= geo.sites()) throw std::invalid_argument("SparseKernel: row out of range");
      entries_.push_back(e);
    }
    col_start_.push_back(entries_.size());
  }
}

SparseKernel SparseKernel::from_triplets(Geometry geo, std::span<const Triplet> triplets) {
  SparseKernel k(geo);
  const std::size_t N = geo.sites();
  for (const auto& t : triplets) {
    if (t.row >= N || t.col >= N) throw std::invalid_argument("SparseKernel: triplet index out of range");
    ++k.col_start_[t.col + 1];
  }
  for (std::size_t y = 0; y < N; ++y) k.col_start_[y + 1] += k.col_start_[y];
  k.entries_.resize(triplets.size());
  std::vector<std::size_t> fill(k.col_start_.begin(), k.col_start_.end() - 1);
  for (const auto& t : triplets) k.entries_[fill[t.col]++] = {t.row, t.value};
  return k;
}

void SparseKernel::apply(std::span<const double> in, std::span<double> out) const {
  if (in.size() != geo_.sites() || out.size() != geo_.sites())
    throw std::invalid_argument("SparseKernel::apply: size mismatch");
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t y = 0; y < geo_.sites(); ++y)
    for (const auto& e : column(y)) out[e.row] += e.value * in[y];
}

double SparseKernel::column_sum_deviation(double target) const {
  double worst = 0.0;
  for (std::size_t y = 0; y < geo_.sites(); ++y) {
    CompensatedSum s;
    for (const auto& e : column(y)) s.add(e.value);
    worst = std::max(worst, std::abs(s.value() - target));
  }
  return worst;
}

DenseKernel DenseKernel::identity(Geometry geo) {
  DenseKernel k(geo);
  for (std::size_t i = 0; i < k.size(); ++i) k(i, i) = 1.0;
  return k;
}

DenseKernel DenseKernel::from_sparse(const SparseKernel& s) {
  DenseKernel k(s.geometry());
  for (std::size_t y = 0; y < k.size(); ++y)
    for (const auto& e : s.column(y)) k(e.row, y) += e.value;
  return k;
}

DenseKernel DenseKernel::compose(const DenseKernel& rhs) const {
  require_same(geo_, rhs.geo_, "DenseKernel::compose");
  const std::size_t n = size();
  DenseKernel out(geo_);
  for (std::size_t y = 0; y < n; ++y) {
    double* oc = out.data_.data() + y * n;
    for (std::size_t z = 0; z < n; ++z) {
      const double r = rhs(z, y);
      if (r == 0.0) continue;
      const double* lc = data_.data() + z * n;
      for (std::size_t x = 0; x < n; ++x) oc[x] += lc[x] * r;
    }
  }
  return out;
}

double DenseKernel::column_sum_deviation(double target) const {
  double worst = 0.0;
  for (std::size_t y = 0; y < size(); ++y) {
    CompensatedSum s;
    for (double v : column(y)) s.add(v);
    worst = std::max(worst, std::abs(s.value() - target));
  }
  return worst;
}

double DenseKernel::max_abs_diff(const DenseKernel& other) const {
  require_same(geo_, other.geo_, "DenseKernel::max_abs_diff");
  double worst = 0.0;
  for (std::size_t i = 0; i < data_.size(); ++i) worst = std::max(worst, std::abs(data_[i] - other.data_[i]));
  return worst;
}

}  // namespace cmldiff
