#include "cmldiff/fourier.hpp"

#include <fftw3.h>

#include <algorithm>
#include <mutex>
#include <numeric>
#include <stdexcept>

#include "cmldiff/lattice.hpp"

namespace cmldiff {
namespace {

// FFTW planning is not thread-safe; execution on a private plan is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

std::vector<cplx> transform(const Geometry& geo, std::vector<cplx> data, int direction) {
  if (data.size() != geo.sites()) throw std::invalid_argument("fft: size mismatch");
  const int d = geo.dim();
  int dims[kMaxDim] = {geo.side(), geo.side(), geo.side()};
  auto* buf = reinterpret_cast<fftw_complex*>(data.data());
  fftw_plan plan;
  {
    std::lock_guard lock(planner_mutex());
    plan = fftw_plan_dft(d, dims, buf, buf, direction, FFTW_ESTIMATE);
  }
  fftw_execute(plan);
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  return data;
}

}  // namespace

std::vector<cplx> fft_forward(const Geometry& geo, std::span<const double> f) {
  return transform(geo, std::vector<cplx>(f.begin(), f.end()), FFTW_FORWARD);
}

std::vector<cplx> fft_forward(const Geometry& geo, std::span<const cplx> f) {
  return transform(geo, std::vector<cplx>(f.begin(), f.end()), FFTW_FORWARD);
}

std::vector<cplx> fft_inverse(const Geometry& geo, std::span<const cplx> f) {
  auto out = transform(geo, std::vector<cplx>(f.begin(), f.end()), FFTW_BACKWARD);
  const double norm = 1.0 / static_cast<double>(geo.sites());
  for (auto& z : out) z *= norm;
  return out;
}

std::vector<double> fft_inverse_real(const Geometry& geo, std::span<const cplx> f) {
  const auto z = fft_inverse(geo, f);
  std::vector<double> out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = z[i].real();
  return out;
}

Wavevector dual_wavevector(const Geometry& geo, std::size_t j) {
  const Coord c = geo.displacement(j);
  Wavevector k{0, 0, 0};
  for (int mu = 0; mu < geo.dim(); ++mu) k[mu] = 2.0 * std::numbers::pi * c[mu] / geo.side();
  return k;
}

cplx ipow(cplx z, std::uint64_t n) {
  cplx r{1.0, 0.0};
  while (n) {
    if (n & 1U) r *= z;
    z *= z;
    n >>= 1U;
  }
  return r;
}

std::vector<double> circular_convolve(const Geometry& geo, std::span<const double> a, std::span<const double> b) {
  auto fa = fft_forward(geo, a);
  const auto fb = fft_forward(geo, b);
  for (std::size_t i = 0; i < fa.size(); ++i) fa[i] *= fb[i];
  return fft_inverse_real(geo, fa);
}

TranslationKernel::TranslationKernel(Geometry geo, std::vector<double> values) : geo_(geo), values_(std::move(values)) {
  if (values_.size() != geo_.sites()) throw std::invalid_argument("TranslationKernel: size mismatch");
  for (double& v : values_) {
    if (!std::isfinite(v) || v < -1e-12) throw std::invalid_argument("TranslationKernel: negative entry");
    v = std::max(v, 0.0);
  }
  if (std::abs(compensated_total(values_) - 1.0) > 1e-12)
    throw std::invalid_argument("TranslationKernel: entries must sum to 1");
  hat_ = fft_forward(geo_, values_);
  for (std::size_t i = 0; i < values_.size(); ++i)
    if (values_[i] != 0.0) support_.emplace_back(geo_.displacement(i), values_[i]);
}

TranslationKernel TranslationKernel::hopping(Geometry geo, double a) {
  std::vector<double> st(stencil_width(geo.dim()), a);
  double out = 0.0;
  for (int mu = 0; mu < geo.dim(); ++mu) out += a + a;
  st[0] = 1.0 - out;
  return from_stencil(geo, st);
}

TranslationKernel TranslationKernel::from_stencil(Geometry geo, std::span<const double> stencil) {
  const int d = geo.dim();
  if (stencil.size() != static_cast<std::size_t>(stencil_width(d)))
    throw std::invalid_argument("TranslationKernel::from_stencil: width mismatch");
  if (geo.side() < 3) throw std::invalid_argument("TranslationKernel::from_stencil: box too small for a stencil");
  std::vector<double> v(geo.sites(), 0.0);
  v[0] = stencil[0];
  for (int mu = 0; mu < d; ++mu) {
    v[geo.neighbor(0, mu, +1)] += stencil[stencil_slot(mu, +1)];
    v[geo.neighbor(0, mu, -1)] += stencil[stencil_slot(mu, -1)];
  }
  return TranslationKernel(geo, std::move(v));
}

cplx TranslationKernel::symbol(const Wavevector& k) const {
  cplx s{0.0, 0.0};
  for (const auto& [u, w] : support_) {
    double phase = 0.0;
    for (int mu = 0; mu < geo_.dim(); ++mu) phase += k[mu] * u[mu];
    s += w * cplx(std::cos(phase), -std::sin(phase));
  }
  return s;
}

double TranslationKernel::diffusion_constant() const {
  CompensatedSum s;
  for (const auto& [u, w] : support_) s.add(static_cast<double>(squared_norm(u, geo_.dim())) * w);
  return s.value();
}

double TranslationKernel::asymmetry() const {
  double worst = 0.0;
  const auto group = point_group(geo_.dim());
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const Coord u = geo_.displacement(i);
    for (const auto& g : group) worst = std::max(worst, std::abs(values_[i] - values_[geo_.index(g.apply(u))]));
  }
  return worst;
}

int TranslationKernel::support_radius() const {
  int r = 0;
  for (const auto& [u, w] : support_) r = std::max(r, l1_norm(u, geo_.dim()));
  return r;
}

std::vector<PointGroupElement> point_group(int d) {
  std::vector<PointGroupElement> out;
  std::array<int, kMaxDim> perm{0, 1, 2};
  do {
    for (int mask = 0; mask < (1 << d); ++mask) {
      PointGroupElement g;
      g.perm = perm;
      for (int i = 0; i < d; ++i) g.sign[i] = (mask >> i) & 1 ? -1 : 1;
      out.push_back(g);
    }
  } while (std::next_permutation(perm.begin(), perm.begin() + d));
  return out;
}

std::vector<double> symmetrize(const Geometry& geo, std::span<const double> f) {
  if (f.size() != geo.sites()) throw std::invalid_argument("symmetrize: size mismatch");
  const auto group = point_group(geo.dim());
  std::vector<double> out(f.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    const Coord u = geo.displacement(i);
    CompensatedSum s;
    for (const auto& g : group) s.add(f[geo.index(g.apply(u))]);
    out[i] = s.value() / static_cast<double>(group.size());
  }
  return out;
}

}  // namespace cmldiff
