#include "cmldiff/kernels.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cmldiff/rng.hpp"

namespace cmldiff::kernels {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void check_sizes(const Geometry& geo, std::size_t got, std::size_t per_site, const char* what) {
  if (got != geo.sites() * per_site) throw std::invalid_argument(std::string(what) + ": buffer size mismatch");
}

inline double refresh_bit(std::uint64_t key, std::uint64_t t, std::size_t site) {
  return static_cast<double>(counter_hash(key, t, site) & 1U) * 0x1.0p-53;
}

}  // namespace

void theta_step(const ThetaField& in, const LocalChaoticMap& map, std::span<double> out) {
  const Geometry& geo = in.geometry();
  const int comps = in.components();
  check_sizes(geo, out.size(), comps, "theta_step");
  if (comps != map.components()) throw std::invalid_argument("theta_step: field/map component mismatch");
  const int d = geo.dim();
  const auto n = static_cast<std::ptrdiff_t>(geo.sites());
  const double* th = in.values().data();
  const double coupling = map.kappa / kTwoPi;
  const bool refresh = map.variant == MapVariant::Doubling && map.refresh_lost_bits;
  const std::uint64_t key = in.refresh_key();
  const std::uint64_t t = in.time();

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto x = static_cast<std::size_t>(i);
    double psi[2] = {0.0, 0.0};
    if (coupling != 0.0) {
      for (int mu = 0; mu < d; ++mu) {
        const std::size_t up = geo.neighbor(x, mu, +1);
        const std::size_t dn = geo.neighbor(x, mu, -1);
        for (int c = 0; c < comps; ++c) {
          const double self = th[x * comps + c];
          psi[c] += std::sin(kTwoPi * (th[up * comps + c] - self)) + std::sin(kTwoPi * (th[dn * comps + c] - self));
        }
      }
      psi[0] *= coupling;
      psi[1] *= coupling;
    }
    if (map.variant == MapVariant::Doubling) {
      double base = 2.0 * th[x];
      base -= std::floor(base);
      if (refresh) base += refresh_bit(key, t, x);
      out[x] = wrap_unit(base + psi[0]);
    } else {
      const double u = th[2 * x];
      const double v = th[2 * x + 1];
      out[2 * x] = wrap_unit(2.0 * u + v + psi[0]);
      out[2 * x + 1] = wrap_unit(u + v + psi[1]);
    }
  }
}

void assemble_stencil(const ThetaField& theta, const CurrentModel& model, std::span<double> stencil) {
  const Geometry& geo = theta.geometry();
  const int d = geo.dim();
  const int w = stencil_width(d);
  check_sizes(geo, stencil.size(), w, "assemble_stencil");
  const auto n = static_cast<std::ptrdiff_t>(geo.sites());

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto y = static_cast<std::size_t>(i);
    double* col = stencil.data() + y * w;
    const double* self = theta.site(y);
    double out = 0.0;
    for (int mu = 0; mu < d; ++mu) {
      const double up = model.rate(self, theta.site(geo.neighbor(y, mu, +1)), +1);
      const double dn = model.rate(self, theta.site(geo.neighbor(y, mu, -1)), -1);
      col[stencil_slot(mu, +1)] = up;
      col[stencil_slot(mu, -1)] = dn;
      out += up + dn;
    }
    col[0] = 1.0 - out;
  }
}

void apply_stencil(const Geometry& geo, std::span<const double> stencil, std::span<const double> in,
                   std::span<double> out) {
  const int d = geo.dim();
  const int w = stencil_width(d);
  check_sizes(geo, stencil.size(), w, "apply_stencil");
  check_sizes(geo, in.size(), 1, "apply_stencil");
  check_sizes(geo, out.size(), 1, "apply_stencil");
  const auto n = static_cast<std::ptrdiff_t>(geo.sites());
  const double* st = stencil.data();

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    const auto x = static_cast<std::size_t>(i);
    double acc = st[x * w] * in[x];
    for (int mu = 0; mu < d; ++mu) {
      const std::size_t from_below = geo.neighbor(x, mu, -1);
      const std::size_t from_above = geo.neighbor(x, mu, +1);
      acc += st[from_below * w + stencil_slot(mu, +1)] * in[from_below];
      acc += st[from_above * w + stencil_slot(mu, -1)] * in[from_above];
    }
    out[x] = acc;
  }
}

namespace reference {

void theta_step(const ThetaField& in, const LocalChaoticMap& map, std::span<double> out) {
  const Geometry& geo = in.geometry();
  const int comps = in.components();
  check_sizes(geo, out.size(), comps, "reference::theta_step");
  const int d = geo.dim();
  for (std::size_t x = 0; x < geo.sites(); ++x) {
    const Coord cx = geo.coords(x);
    for (int c = 0; c < comps; ++c) {
      double psi = 0.0;
      for (int mu = 0; mu < d; ++mu) {
        for (int s : {+1, -1}) {
          Coord cy = cx;
          cy[mu] += s;
          const double diff = in.site(geo.index(cy))[c] - in.site(x)[c];
          psi += map.kappa * std::sin(kTwoPi * diff) / kTwoPi;
        }
      }
      double g = 0.0;
      if (map.variant == MapVariant::Doubling) {
        g = std::fmod(2.0 * in.site(x)[0], 1.0);
        if (map.refresh_lost_bits) g += refresh_bit(in.refresh_key(), in.time(), x);
      } else {
        const double u = in.site(x)[0];
        const double v = in.site(x)[1];
        g = c == 0 ? 2.0 * u + v : u + v;
      }
      out[x * comps + c] = wrap_unit(g + psi);
    }
  }
}

void assemble_stencil(const ThetaField& theta, const CurrentModel& model, std::span<double> stencil) {
  const Geometry& geo = theta.geometry();
  const int d = geo.dim();
  const int w = stencil_width(d);
  check_sizes(geo, stencil.size(), w, "reference::assemble_stencil");
  for (std::size_t y = 0; y < geo.sites(); ++y) {
    const Coord cy = geo.coords(y);
    double total = 0.0;
    for (int mu = 0; mu < d; ++mu) {
      for (int s : {+1, -1}) {
        Coord cx = cy;
        cx[mu] += s;
        const double r = model.a + model.eps_prime * model.noise_value(theta.site(y), theta.site(geo.index(cx)), s);
        stencil[y * w + stencil_slot(mu, s)] = r;
        total += r;
      }
    }
    stencil[y * w] = 1.0 - total;
  }
}

void apply_stencil(const Geometry& geo, std::span<const double> stencil, std::span<const double> in,
                   std::span<double> out) {
  const int d = geo.dim();
  const int w = stencil_width(d);
  check_sizes(geo, stencil.size(), w, "reference::apply_stencil");
  for (double& v : out) v = 0.0;
  for (std::size_t y = 0; y < geo.sites(); ++y) {
    out[y] += stencil[y * w] * in[y];
    const Coord cy = geo.coords(y);
    for (int mu = 0; mu < d; ++mu) {
      for (int s : {+1, -1}) {
        Coord cx = cy;
        cx[mu] += s;
        out[geo.index(cx)] += stencil[y * w + stencil_slot(mu, s)] * in[y];
      }
    }
  }
}

}  // namespace reference
}  // namespace cmldiff::kernels
