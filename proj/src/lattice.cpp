#include "cmldiff/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>

#include "cmldiff/kernels.hpp"

namespace cmldiff {

double compensated_total(std::span<const double> values) {
  CompensatedSum s;
  for (double v : values) s.add(v);
  return s.value();
}

EnergyField::EnergyField(Geometry geo, std::vector<double> values) : geo_(geo), values_(std::move(values)) {
  if (values_.size() != geo_.sites()) throw std::invalid_argument("EnergyField: size mismatch");
  for (double v : values_)
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("EnergyField: values must be finite and >= 0");
}

EnergyField EnergyField::spike(Geometry geo, std::size_t site, double mass) {
  std::vector<double> v(geo.sites(), 0.0);
  v.at(site) = mass;
  return EnergyField(geo, std::move(v));
}

EnergyField EnergyField::constant(Geometry geo, double value) {
  return EnergyField(geo, std::vector<double>(geo.sites(), value));
}

double EnergyField::mass() const { return compensated_total(values_); }

double EnergyField::min() const { return values_.empty() ? 0.0 : *std::min_element(values_.begin(), values_.end()); }

ThetaField::ThetaField(Geometry geo, int components, std::uint64_t refresh_key, std::uint64_t time)
    : ThetaField(geo, components, std::vector<double>(geo.sites() * components, 0.0), refresh_key, time) {}

ThetaField::ThetaField(Geometry geo, int components, std::vector<double> values, std::uint64_t refresh_key,
                       std::uint64_t time)
    : geo_(geo), comps_(components), values_(std::move(values)), refresh_key_(refresh_key), time_(time) {
  if (comps_ != 1 && comps_ != 2) throw std::invalid_argument("ThetaField: components must be 1 or 2");
  if (values_.size() != geo_.sites() * comps_) throw std::invalid_argument("ThetaField: size mismatch");
  for (double v : values_)
    if (!(v >= 0.0 && v < 1.0)) throw std::invalid_argument("ThetaField: coordinates must lie in [0, 1)");
}

ThetaField ThetaField::shifted(const Coord& v) const {
  std::vector<double> out(values_.size());
  for (std::size_t x = 0; x < geo_.sites(); ++x) {
    const std::size_t to = geo_.translate(x, v);
    for (int c = 0; c < comps_; ++c) out[to * comps_ + c] = values_[x * comps_ + c];
  }
  return ThetaField(geo_, comps_, std::move(out), refresh_key_, time_);
}

void LocalChaoticMap::validate() const {
  if (!(kappa >= 0.0) || !std::isfinite(kappa)) throw std::invalid_argument("LocalChaoticMap: kappa must be >= 0");
}

void CurrentModel::validate() const {
  if (!(a >= 0.0) || !std::isfinite(a)) throw std::invalid_argument("CurrentModel: a must be >= 0");
  if (!(eps_prime >= 0.0) || !std::isfinite(eps_prime))
    throw std::invalid_argument("CurrentModel: eps_prime must be >= 0");
  if (eps_prime > 0.0 && !(eps_prime < a))
    throw std::invalid_argument("CurrentModel: eps_prime must be smaller than a (uniform ellipticity)");
}

double CurrentModel::noise_value(const double* self, const double* nbr, int sign) const {
  const double c = std::cos(2.0 * std::numbers::pi * (self[0] - nbr[0]));
  switch (noise) {
    case NoiseKind::Cos:
      return c;
    case NoiseKind::Directed:
      return sign * 0.5 * (1.0 + c);
  }
  return c;
}

std::vector<double> divergence(const Geometry& geo, std::span<const double> J) {
  const int d = geo.dim();
  if (J.size() != geo.sites() * static_cast<std::size_t>(d))
    throw std::invalid_argument("divergence: expected one current per (axis, site)");
  std::vector<double> out(geo.sites(), 0.0);
  for (int mu = 0; mu < d; ++mu) {
    const double* Jmu = J.data() + mu * geo.sites();
    for (std::size_t x = 0; x < geo.sites(); ++x) out[x] += Jmu[geo.neighbor(x, mu, +1)] - Jmu[x];
  }
  return out;
}

std::vector<double> bond_currents(const EnergyField& E, const ThetaField& theta, const CurrentModel& model) {
  const Geometry& geo = E.geometry();
  require_same(geo, theta.geometry(), "bond_currents");
  const int d = geo.dim();
  std::vector<double> J(geo.sites() * d, 0.0);
  for (int mu = 0; mu < d; ++mu) {
    for (std::size_t x = 0; x < geo.sites(); ++x) {
      const std::size_t up = geo.neighbor(x, mu, +1);
      const double phi =
          model.rate(theta.site(x), theta.site(up), +1) * E[x] - model.rate(theta.site(up), theta.site(x), -1) * E[up];
      J[mu * geo.sites() + up] = -phi;
    }
  }
  return J;
}

ThetaField step_theta(const ThetaField& theta, const LocalChaoticMap& map) {
  std::vector<double> out(theta.values().size());
  kernels::theta_step(theta, map, out);
  return ThetaField(theta.geometry(), theta.components(), std::move(out), theta.refresh_key(), theta.time() + 1);
}

std::vector<double> energy_update_unchecked(std::span<const double> E, const ThetaField& theta,
                                            const CurrentModel& model) {
  const Geometry& geo = theta.geometry();
  std::vector<double> stencil(geo.sites() * stencil_width(geo.dim()));
  kernels::assemble_stencil(theta, model, stencil);
  std::vector<double> out(geo.sites());
  kernels::apply_stencil(geo, stencil, E, out);
  return out;
}

EnergyField step_energy(const EnergyField& E, const ThetaField& theta, const CurrentModel& model) {
  require_same(E.geometry(), theta.geometry(), "step_energy");
  model.validate();
  if (!model.positivity_ok(E.geometry().dim()))
    throw std::invalid_argument("step_energy: model violates 2d(a + eps') <= 1");
  return EnergyField(E.geometry(), energy_update_unchecked(E.values(), theta, model));
}

Trajectory run_trajectory(const EnergyField& E0, const ThetaField& theta0, const CurrentModel& model,
                          const LocalChaoticMap& map, std::uint64_t steps, const TrajectoryOptions& options) {
  require_same(E0.geometry(), theta0.geometry(), "run_trajectory");
  model.validate();
  map.validate();
  if (!model.positivity_ok(E0.geometry().dim()))
    throw std::invalid_argument("run_trajectory: model violates 2d(a + eps') <= 1");

  const std::set<std::uint64_t> schedule(options.snapshot_times.begin(), options.snapshot_times.end());
  if (!schedule.empty() && *schedule.rbegin() > steps)
    throw std::invalid_argument("run_trajectory: snapshot time beyond the last step");
  const std::size_t per_snapshot =
      sizeof(double) * (E0.values().size() + (options.snapshot_theta ? theta0.values().size() : 0));
  if (schedule.size() * per_snapshot > options.max_snapshot_bytes)
    throw std::length_error("run_trajectory: snapshot schedule exceeds the memory budget");

  Trajectory out;
  out.mass_drift.reserve(steps + 1);
  out.min_value.reserve(steps + 1);
  const double m0 = E0.mass();
  const Geometry& geo = E0.geometry();

  EnergyField E = E0;
  ThetaField theta = theta0;
  std::vector<double> stencil(geo.sites() * stencil_width(geo.dim()));
  std::vector<double> next(geo.sites());

  auto record = [&](std::uint64_t t) {
    const double drift = m0 > 0.0 ? std::abs(E.mass() - m0) / m0 : std::abs(E.mass());
    out.mass_drift.push_back(drift);
    out.min_value.push_back(E.min());
    if (schedule.count(t)) {
      Snapshot s{t, E, std::nullopt};
      if (options.snapshot_theta) s.theta = theta;
      out.snapshots.push_back(std::move(s));
    }
  };

  record(0);
  for (std::uint64_t t = 0; t < steps; ++t) {
    kernels::assemble_stencil(theta, model, stencil);
    kernels::apply_stencil(geo, stencil, E.values(), next);
    E = EnergyField(geo, next);
    theta = step_theta(theta, map);
    record(t + 1);
  }
  out.final_E = std::move(E);
  out.final_theta = std::move(theta);
  return out;
}

}  // namespace cmldiff
