#pragma once

#include <cmath>
#include <vector>

#include "cmldiff/lattice.hpp"
#include "cmldiff/rng.hpp"

namespace cmldiff::testing {

inline ThetaField random_theta(const Geometry& geo, int comps, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(geo.sites() * comps);
  for (double& x : v) x = rng.uniform();
  return ThetaField(geo, comps, std::move(v), splitmix64(seed));
}

inline EnergyField random_energy(const Geometry& geo, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(geo.sites());
  for (double& x : v) x = scale * rng.uniform();
  return EnergyField(geo, std::move(v));
}

/// Distance on the unit circle.
inline double circle_distance(double a, double b) {
  const double d = std::abs(a - b);
  return std::min(d, 1.0 - d);
}

}  // namespace cmldiff::testing
