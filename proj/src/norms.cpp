#include "cmldiff/norms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <queue>
#include <set>
#include <stdexcept>

namespace cmldiff {
namespace {

long long l1_distance(const Coord& a, const Coord& b, int d) {
  long long s = 0;
  for (int i = 0; i < d; ++i) s += std::llabs(static_cast<long long>(a[i]) - b[i]);
  return s;
}

long long mst_length(const std::vector<Coord>& pts, int d) {
  const std::size_t n = pts.size();
  std::vector<long long> best(n, std::numeric_limits<long long>::max());
  std::vector<bool> in(n, false);
  best[0] = 0;
  long long total = 0;
  for (std::size_t it = 0; it < n; ++it) {
    std::size_t pick = n;
    for (std::size_t i = 0; i < n; ++i)
      if (!in[i] && (pick == n || best[i] < best[pick])) pick = i;
    in[pick] = true;
    total += best[pick];
    for (std::size_t i = 0; i < n; ++i)
      if (!in[i]) best[i] = std::min(best[i], l1_distance(pts[pick], pts[i], d));
  }
  return total;
}

// Dreyfus-Wagner on the Hanan grid, which contains an optimal rectilinear
// Steiner tree in every dimension.
long long steiner_hanan(const std::vector<Coord>& terminals, int d) {
  std::array<std::vector<int>, kMaxDim> axes;
  for (int i = 0; i < d; ++i) {
    std::set<int> s;
    for (const auto& t : terminals) s.insert(t[i]);
    axes[i].assign(s.begin(), s.end());
  }
  std::array<std::size_t, kMaxDim> ext{1, 1, 1};
  for (int i = 0; i < d; ++i) ext[i] = axes[i].size();
  const std::size_t n = ext[0] * ext[1] * ext[2];
  auto node_of = [&](const std::array<std::size_t, kMaxDim>& g) { return g[0] + ext[0] * (g[1] + ext[1] * g[2]); };
  auto grid_of = [&](std::size_t v) {
    return std::array<std::size_t, kMaxDim>{v % ext[0], (v / ext[0]) % ext[1], v / (ext[0] * ext[1])};
  };
  std::vector<std::vector<std::pair<std::size_t, long long>>> adj(n);
  for (std::size_t v = 0; v < n; ++v) {
    const auto g = grid_of(v);
    for (int i = 0; i < d; ++i) {
      if (g[i] + 1 < ext[i]) {
        auto h = g;
        ++h[i];
        const long long w = axes[i][h[i]] - axes[i][g[i]];
        adj[v].emplace_back(node_of(h), w);
        adj[node_of(h)].emplace_back(v, w);
      }
    }
  }
  std::vector<std::size_t> term;
  for (const auto& t : terminals) {
    std::array<std::size_t, kMaxDim> g{0, 0, 0};
    for (int i = 0; i < d; ++i)
      g[i] = static_cast<std::size_t>(std::lower_bound(axes[i].begin(), axes[i].end(), t[i]) - axes[i].begin());
    term.push_back(node_of(g));
  }

  const long long inf = std::numeric_limits<long long>::max() / 4;
  auto dijkstra = [&](std::vector<long long>& dist) {
    using Item = std::pair<long long, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
    for (std::size_t v = 0; v < n; ++v)
      if (dist[v] < inf) pq.emplace(dist[v], v);
    while (!pq.empty()) {
      const auto [dv, v] = pq.top();
      pq.pop();
      if (dv != dist[v]) continue;
      for (const auto& [u, w] : adj[v])
        if (dv + w < dist[u]) {
          dist[u] = dv + w;
          pq.emplace(dist[u], u);
        }
    }
  };

  const std::size_t k = term.size();
  const std::size_t full = (std::size_t{1} << k) - 1;
  std::vector<std::vector<long long>> dp(full + 1, std::vector<long long>(n, inf));
  for (std::size_t i = 0; i < k; ++i) {
    dp[std::size_t{1} << i][term[i]] = 0;
    dijkstra(dp[std::size_t{1} << i]);
  }
  for (std::size_t mask = 1; mask <= full; ++mask) {
    if ((mask & (mask - 1)) == 0) continue;
    auto& cur = dp[mask];
    for (std::size_t sub = (mask - 1) & mask; sub > 0; sub = (sub - 1) & mask) {
      if (sub < (mask ^ sub)) continue;
      const auto& a = dp[sub];
      const auto& b = dp[mask ^ sub];
      for (std::size_t v = 0; v < n; ++v) cur[v] = std::min(cur[v], a[v] + b[v]);
    }
    dijkstra(cur);
  }
  return dp[full][term[0]];
}

Coord cell_of(const Geometry& geo, std::size_t site, int side) {
  Coord c = geo.coords(site);
  for (int i = 0; i < geo.dim(); ++i) c[i] /= side;
  return c;
}

}  // namespace

TauResult tau(std::span<const Coord> C, int d) {
  if (C.empty()) throw std::invalid_argument("tau: empty set");
  std::vector<Coord> pts;
  for (const auto& c : C) {
    Coord p{0, 0, 0};
    for (int i = 0; i < d; ++i) p[i] = c[i];
    if (std::find(pts.begin(), pts.end(), p) == pts.end()) pts.push_back(p);
  }
  if (pts.size() == 1) return {0, true};
  if (pts.size() == 2) return {l1_distance(pts[0], pts[1], d), true};
  if (pts.size() > kTauExactLimit) return {mst_length(pts, d), false};
  return {steiner_hanan(pts, d), true};
}

double cell_norm(const SparseKernel& b, const Coord& u, const Coord& v, int cell_side) {
  const Geometry& geo = b.geometry();
  if (cell_side < 1 || geo.side() % cell_side != 0) throw std::invalid_argument("cell_norm: cell side must divide M");
  double best = 0.0;
  for (std::size_t y = 0; y < geo.sites(); ++y) {
    if (cell_of(geo, y, cell_side) != v) continue;
    for (const auto& e : b.column(y))
      if (cell_of(geo, e.row, cell_side) == u) best = std::max(best, std::abs(e.value));
  }
  return best;
}

double weighted_kernel_norm_simplified(const SparseKernel& b, int cell_side, const WeightedNormParams& params) {
  if (!(params.lambda >= 0.0) || params.lambda > params.lambda_max)
    throw std::invalid_argument("weighted_kernel_norm_simplified: lambda out of range");
  const Geometry& geo = b.geometry();
  if (cell_side < 1 || geo.side() % cell_side != 0)
    throw std::invalid_argument("weighted_kernel_norm_simplified: cell side must divide M");
  const Geometry cells(geo.dim(), std::max(2, geo.side() / cell_side));
  // (v, u) -> sup |b|
  std::map<std::pair<std::size_t, std::size_t>, double> sup;
  for (std::size_t y = 0; y < geo.sites(); ++y) {
    const std::size_t v = cells.index(cell_of(geo, y, cell_side));
    for (const auto& e : b.column(y)) {
      if (e.value == 0.0) continue;
      double& s = sup[{v, cells.index(cell_of(geo, e.row, cell_side))}];
      s = std::max(s, std::abs(e.value));
    }
  }
  double best = 0.0;
  std::size_t current = std::numeric_limits<std::size_t>::max();
  CompensatedSum acc;
  auto flush = [&] {
    if (current != std::numeric_limits<std::size_t>::max()) best = std::max(best, acc.value());
    acc = CompensatedSum{};
  };
  for (const auto& [key, s] : sup) {
    if (key.first != current) {
      flush();
      current = key.first;
    }
    Coord diff{0, 0, 0};
    const Coord cu = cells.coords(key.second);
    const Coord cv = cells.coords(key.first);
    for (int i = 0; i < geo.dim(); ++i) diff[i] = cells.min_image(cu[i] - cv[i]);
    long long w = l1_norm(diff, geo.dim());
    if (params.mode == NormWeight::Tau) {
      const Coord pair[2] = {Coord{0, 0, 0}, diff};
      w = tau(pair, geo.dim()).value;
    }
    acc.add(s * std::exp(params.lambda * static_cast<double>(w)));
  }
  flush();
  return best;
}

DecayFit decay_rate_fit(std::span<const double> distances, std::span<const double> values) {
  if (distances.size() != values.size()) throw std::invalid_argument("decay_rate_fit: size mismatch");
  DecayFit fit;
  if (std::all_of(values.begin(), values.end(), [](double v) { return v == 0.0; })) {
    fit.vacuous = true;
    fit.m = std::numeric_limits<double>::infinity();
    return fit;
  }
  std::vector<double> xs, ys;
  std::set<double> distinct;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double v = std::abs(values[i]);
    if (v > 0.0 && std::isfinite(v)) {
      xs.push_back(distances[i]);
      ys.push_back(std::log(v));
      distinct.insert(distances[i]);
    }
  }
  if (distinct.size() < 3) throw std::invalid_argument("decay_rate_fit: need >= 3 distinct distances with nonzero values");
  const double n = static_cast<double>(xs.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;
  double ss = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double r = ys[i] - (intercept + slope * xs[i]);
    ss += r * r;
  }
  fit.m = -slope;
  fit.C = std::exp(intercept);
  fit.residual = std::sqrt(ss / n);
  fit.m_stderr = xs.size() > 2 ? std::sqrt(ss / (n - 2) / sxx) : 0.0;
  fit.no_decay = !(fit.m > 1e-12);
  fit.points = xs.size();
  return fit;
}

}  // namespace cmldiff
