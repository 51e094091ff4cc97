#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "cmldiff/rwre.hpp"

namespace cmldiff {
namespace {

constexpr char kMagic[8] = {'C', 'M', 'L', 'E', 'N', 'V', '0', '1'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& os, T v) {
  unsigned char b[sizeof(T)];
  std::memcpy(b, &v, sizeof(T));
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  os.write(reinterpret_cast<const char*>(b), sizeof(T));
}

template <typename T>
T get(std::istream& is) {
  unsigned char b[sizeof(T)];
  if (!is.read(reinterpret_cast<char*>(b), sizeof(T))) throw std::runtime_error("load_environment: truncated file");
  if constexpr (std::endian::native == std::endian::big) std::reverse(b, b + sizeof(T));
  T v;
  std::memcpy(&v, b, sizeof(T));
  return v;
}

}  // namespace

void save_environment(const std::filesystem::path& path, const EnvironmentKernel& env) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("save_environment: cannot open " + path.string());
  const auto& info = env.info();
  os.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(os, kVersion);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(env.geometry().dim()));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(env.geometry().side()));
  put<std::uint64_t>(os, env.t_max());
  put<double>(os, info.model.a);
  put<double>(os, info.model.eps_prime);
  put<double>(os, info.map.kappa);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(info.map.variant));
  put<std::uint32_t>(os, static_cast<std::uint32_t>(info.model.noise));
  put<std::uint32_t>(os, info.map.refresh_lost_bits ? 1U : 0U);
  put<std::uint64_t>(os, info.seed);
  put<std::uint32_t>(os, static_cast<std::uint32_t>(env.width()));
  for (double v : env.data()) put<double>(os, v);
  if (!os) throw std::runtime_error("save_environment: write failed for " + path.string());
}

EnvironmentKernel load_environment(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("load_environment: cannot open " + path.string());
  char magic[8];
  if (!is.read(magic, sizeof magic) || std::memcmp(magic, kMagic, sizeof magic) != 0)
    throw std::runtime_error("load_environment: not an environment file");
  if (get<std::uint32_t>(is) != kVersion) throw std::runtime_error("load_environment: unsupported version");
  const int d = static_cast<int>(get<std::uint32_t>(is));
  const int M = static_cast<int>(get<std::uint32_t>(is));
  const auto t_max = get<std::uint64_t>(is);
  EnvironmentInfo info;
  info.model.a = get<double>(is);
  info.model.eps_prime = get<double>(is);
  info.map.kappa = get<double>(is);
  const auto variant = get<std::uint32_t>(is);
  const auto noise = get<std::uint32_t>(is);
  if (variant > 1 || noise > 1) throw std::runtime_error("load_environment: unknown map or noise kind");
  info.map.variant = static_cast<MapVariant>(variant);
  info.model.noise = static_cast<NoiseKind>(noise);
  info.map.refresh_lost_bits = get<std::uint32_t>(is) != 0;
  info.seed = get<std::uint64_t>(is);
  const Geometry geo(d, M);
  const auto width = get<std::uint32_t>(is);
  if (width != static_cast<std::uint32_t>(stencil_width(d))) throw std::runtime_error("load_environment: bad stencil width");
  std::vector<double> st(t_max * geo.sites() * width);
  for (double& v : st) v = get<double>(is);
  if (is.peek() != std::char_traits<char>::eof()) throw std::runtime_error("load_environment: trailing bytes");
  return EnvironmentKernel(geo, t_max, std::move(st), info);
}

}  // namespace cmldiff
