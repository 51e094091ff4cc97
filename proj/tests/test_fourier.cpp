#include <cmath>
#include <numbers>

#include "cmldiff/fourier.hpp"
#include "cmldiff/lattice.hpp"
#include "cmldiff/rng.hpp"
#include "doctest.h"

using namespace cmldiff;

namespace {

std::vector<double> random_vector(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal();
  return v;
}

}  // namespace

TEST_CASE("transform round trip") {
  for (int d : {1, 2, 3}) {
    const Geometry geo(d, d == 3 ? 6 : 12);
    const auto f = random_vector(geo.sites(), d);
    const auto back = fft_inverse_real(geo, fft_forward(geo, f));
    for (std::size_t i = 0; i < f.size(); ++i) CHECK(std::abs(back[i] - f[i]) <= 1e-12);
  }
}

TEST_CASE("transform matches the direct sum") {
  const Geometry geo(2, 5);
  const auto f = random_vector(geo.sites(), 9);
  const auto F = fft_forward(geo, f);
  for (std::size_t j = 0; j < geo.sites(); ++j) {
    const Wavevector k = dual_wavevector(geo, j);
    cplx s{0, 0};
    for (std::size_t x = 0; x < geo.sites(); ++x) {
      const Coord c = geo.coords(x);
      const double ph = k[0] * c[0] + k[1] * c[1];
      s += f[x] * cplx(std::cos(ph), -std::sin(ph));
    }
    CHECK(std::abs(F[j] - s) < 1e-12);
  }
}

TEST_CASE("circular convolution against the direct sum") {
  const Geometry geo(1, 9);
  const auto a = random_vector(9, 1);
  const auto b = random_vector(9, 2);
  const auto c = circular_convolve(geo, a, b);
  for (int x = 0; x < 9; ++x) {
    double s = 0;
    for (int y = 0; y < 9; ++y) s += a[geo.wrap(x - y)] * b[y];
    CHECK(c[x] == doctest::Approx(s).epsilon(1e-12));
  }
}

TEST_CASE("ipow") {
  const cplx z{0.3, -0.8};
  for (std::uint64_t n : {0ULL, 1ULL, 2ULL, 7ULL, 64ULL}) CHECK(std::abs(ipow(z, n) - std::pow(z, static_cast<double>(n))) < 1e-13);
}

TEST_CASE("hopping kernel symbol, d=1 a=1/4 is cos^2(k/2)") {
  const Geometry geo(1, 16);
  const auto T = TranslationKernel::hopping(geo, 0.25);
  for (std::size_t j = 0; j < 16; ++j) {
    const double k = dual_wavevector(geo, j)[0];
    const double c = std::cos(k / 2);
    CHECK(std::abs(T.hat()[j] - cplx(c * c, 0)) < 1e-15);
  }
  for (double k : {0.1, 1.0, 2.5, std::numbers::pi}) {
    const double c = std::cos(k / 2);
    CHECK(std::abs(T.symbol({k, 0, 0}) - cplx(c * c, 0)) < 1e-15);
  }
}

TEST_CASE("diffusion constant examples") {
  const Geometry g1(1, 8), g2(2, 8);
  CHECK(diffusion_constant(TranslationKernel::hopping(g1, 0.0)) == 0.0);
  CHECK(diffusion_constant(TranslationKernel::hopping(g1, 0.25)) == 0.5);
  CHECK(diffusion_constant(TranslationKernel::hopping(g2, 0.125)) == 0.5);
  // symbol curvature at the origin: T^(k) = 1 - D0/(2d) k^2 + O(k^4)
  const auto T = TranslationKernel::hopping(g2, 0.1);
  const double h = 1e-4;
  const double curv = (1.0 - T.symbol({h, 0, 0}).real()) / (h * h);
  CHECK(curv == doctest::Approx(T.diffusion_constant() / 4).epsilon(1e-6));
}

TEST_CASE("kernel validation") {
  const Geometry geo(1, 4);
  CHECK_THROWS_AS(TranslationKernel(geo, {0.5, 0.5, 0.1, 0}), std::invalid_argument);
  CHECK_THROWS_AS(TranslationKernel(geo, {1.1, -0.1, 0, 0}), std::invalid_argument);
  CHECK_NOTHROW(TranslationKernel(geo, {1.0 + 1e-13, -1e-13, 0, 0}));
}

TEST_CASE("point group and symmetrization") {
  CHECK(point_group(1).size() == 2);
  CHECK(point_group(2).size() == 8);
  CHECK(point_group(3).size() == 48);
  const Geometry geo(2, 7);
  auto f = random_vector(geo.sites(), 3);
  for (double& v : f) v = std::abs(v);
  const auto s = symmetrize(geo, f);
  const auto s2 = symmetrize(geo, s);
  for (std::size_t i = 0; i < s.size(); ++i) CHECK(s2[i] == doctest::Approx(s[i]).epsilon(1e-14));
  double tot = 0;
  for (double v : s) tot += v;
  std::vector<double> norm(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) norm[i] = s[i] / tot;
  CHECK(TranslationKernel(geo, norm).asymmetry() < 1e-15);
  // a symmetric kernel has a real transform
  const TranslationKernel sym(geo, norm);
  for (const auto& z : sym.hat()) CHECK(std::abs(z.imag()) < 1e-14);
}
