#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cmldiff/geometry.hpp"

namespace cmldiff {

// ---------------------------------------------------------------------------
// Fields

/// Nonnegative conserved scalar on the periodic lattice.
class EnergyField {
 public:
  EnergyField() = default;
  explicit EnergyField(Geometry geo) : geo_(geo), values_(geo.sites(), 0.0) {}
  EnergyField(Geometry geo, std::vector<double> values);

  static EnergyField spike(Geometry geo, std::size_t site, double mass);
  static EnergyField constant(Geometry geo, double value);

  const Geometry& geometry() const { return geo_; }
  std::span<const double> values() const { return values_; }
  double operator[](std::size_t i) const { return values_[i]; }

  /// Total mass with compensated summation.
  double mass() const;
  double min() const;

 private:
  Geometry geo_;
  std::vector<double> values_;
};

/// Per-site chaotic coordinates, one circle point or one torus point per site.
/// Layout: values[site * components + c], every coordinate in [0, 1).
class ThetaField {
 public:
  ThetaField() = default;
  ThetaField(Geometry geo, int components, std::uint64_t refresh_key = 0, std::uint64_t time = 0);
  ThetaField(Geometry geo, int components, std::vector<double> values, std::uint64_t refresh_key = 0,
             std::uint64_t time = 0);

  const Geometry& geometry() const { return geo_; }
  int components() const { return comps_; }
  std::span<const double> values() const { return values_; }
  std::span<double> mutable_values() { return values_; }
  const double* site(std::size_t i) const { return values_.data() + i * comps_; }

  /// Key of the counter-based stream that refreshes bits lost by the doubling map.
  std::uint64_t refresh_key() const { return refresh_key_; }
  /// Number of steps applied since the field was created.
  std::uint64_t time() const { return time_; }

  ThetaField shifted(const Coord& v) const;

 private:
  Geometry geo_;
  int comps_ = 1;
  std::vector<double> values_;
  std::uint64_t refresh_key_ = 0;
  std::uint64_t time_ = 0;
};

/// x - floor(x), mapped into [0, 1).
inline double wrap_unit(double x) {
  double r = x - std::floor(x);
  return r >= 1.0 ? 0.0 : r;
}

// ---------------------------------------------------------------------------
// Dynamics

enum class MapVariant { Doubling, Cat };

/// Local expanding map g plus the nearest-neighbour coupling
///   psi_c(x) = kappa/(2 pi) * sum_mu [sin 2pi(theta_c(x+e_mu) - theta_c(x))
///                                    + sin 2pi(theta_c(x-e_mu) - theta_c(x))]
/// applied to every coordinate c. |psi| <= d * kappa / pi.
struct LocalChaoticMap {
  MapVariant variant = MapVariant::Doubling;
  double kappa = 0.0;
  /// Doubling only: refill the 2^-53 bit shifted out by each doubling from a
  /// counter hash, so finite-precision orbits do not collapse onto 0.
  bool refresh_lost_bits = true;

  int components() const { return variant == MapVariant::Doubling ? 1 : 2; }
  void validate() const;
};

enum class NoiseKind {
  Cos,       ///< w = cos 2pi(theta_self - theta_nbr), first coordinate
  Directed,  ///< w = sign * (1 + cos 2pi(theta_self - theta_nbr)) / 2; breaks reflection symmetry
};

/// Exchange current: the rate at which site x sends energy to x + sign*e_mu is
///   a + eps' * w(theta(x), theta(x + sign*e_mu), sign).
struct CurrentModel {
  double a = 0.25;
  double eps_prime = 0.0;
  NoiseKind noise = NoiseKind::Cos;

  /// a >= 0, eps' >= 0, and eps' < a unless eps' == 0.
  void validate() const;
  /// 2d (a + eps') <= 1: a site never sends out more than it holds.
  bool positivity_ok(int d) const { return 2.0 * d * (a + eps_prime) <= 1.0; }

  double noise_value(const double* self, const double* nbr, int sign) const;
  double rate(const double* self, const double* nbr, int sign) const {
    return a + eps_prime * noise_value(self, nbr, sign);
  }
};

/// Stencil slot of the hop from a site towards sign*e_axis; slot 0 is the
/// retained fraction. Stencil width is 2d + 1.
inline constexpr int stencil_slot(int axis, int sign) { return sign > 0 ? 1 + 2 * axis : 2 + 2 * axis; }
inline constexpr int stencil_width(int d) { return 2 * d + 1; }

/// output(x) = sum_mu J^mu(x + e_mu) - J^mu(x); J is laid out [axis][site].
std::vector<double> divergence(const Geometry& geo, std::span<const double> J);

/// Bond currents with J^mu(x) = -phi_mu(x - e_mu), where phi_mu(x) is the net
/// flux from x to x + e_mu, so that E' = E + divergence(J).
std::vector<double> bond_currents(const EnergyField& E, const ThetaField& theta, const CurrentModel& model);

ThetaField step_theta(const ThetaField& theta, const LocalChaoticMap& map);

/// Throws std::invalid_argument when 2d(a + eps') > 1.
EnergyField step_energy(const EnergyField& E, const ThetaField& theta, const CurrentModel& model);

/// f_t(x, E) without the positivity guard; may go negative. Used by the
/// assumption validator to exhibit witnesses.
std::vector<double> energy_update_unchecked(std::span<const double> E, const ThetaField& theta,
                                            const CurrentModel& model);

struct Snapshot {
  std::uint64_t t = 0;
  EnergyField E;
  std::optional<ThetaField> theta;
};

struct TrajectoryOptions {
  std::vector<std::uint64_t> snapshot_times;  ///< must be <= steps; duplicates ignored
  bool snapshot_theta = true;
  std::size_t max_snapshot_bytes = std::size_t{1} << 30;
};

struct Trajectory {
  std::vector<Snapshot> snapshots;
  /// |sum E(t) - sum E(0)| / sum E(0) for t = 0..steps.
  std::vector<double> mass_drift;
  /// min_x E(t, x) for t = 0..steps.
  std::vector<double> min_value;
  EnergyField final_E;
  ThetaField final_theta;
};

/// Iterates (theta, E) -> (step_theta, step_energy) `steps` times; the energy
/// step at time t uses theta(t). Throws std::length_error when the snapshot
/// schedule exceeds the configured memory budget.
Trajectory run_trajectory(const EnergyField& E0, const ThetaField& theta0, const CurrentModel& model,
                          const LocalChaoticMap& map, std::uint64_t steps, const TrajectoryOptions& options);

}  // namespace cmldiff
