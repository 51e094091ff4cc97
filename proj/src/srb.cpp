#include "cmldiff/srb.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "cmldiff/rng.hpp"

namespace cmldiff {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Per-block sums for the lagged pair (F1 at t, F2 at t + lag).
struct PairSums {
  double s1 = 0, s2 = 0, s12 = 0;
  double n = 0;

  void add(double a, double b) {
    s1 += a;
    s2 += b;
    s12 += a * b;
    n += 1;
  }
  PairSums& operator+=(const PairSums& o) {
    s1 += o.s1;
    s2 += o.s2;
    s12 += o.s12;
    n += o.n;
    return *this;
  }
  PairSums& operator-=(const PairSums& o) {
    s1 -= o.s1;
    s2 -= o.s2;
    s12 -= o.s12;
    n -= o.n;
    return *this;
  }
  double covariance() const { return s12 / n - (s1 / n) * (s2 / n); }
};

// blocks[lag_index][block]
using BlockTable = std::vector<std::vector<PairSums>>;

CorrelationEstimate summarize(const std::string& name, int sep, const std::vector<PairSums>& blocks) {
  PairSums total;
  for (const auto& b : blocks) total += b;
  CorrelationEstimate e;
  e.observables = name;
  e.separation = sep;
  e.count = static_cast<std::size_t>(total.n);
  e.mean1 = total.s1 / total.n;
  e.mean2 = total.s2 / total.n;
  e.mean_product = total.s12 / total.n;
  e.covariance = total.covariance();
  std::vector<double> loo;
  for (const auto& b : blocks) {
    PairSums rest = total;
    rest -= b;
    loo.push_back(rest.covariance());
  }
  e.std_error = jackknife_stderr(loo);
  return e;
}

// Series of F1 and F2 on every site along one trajectory of `length` states.
void record_series(const SRBSampler& sampler, const Observable& F1, const Observable& F2, std::uint64_t length,
                   std::uint64_t replica, std::vector<double>& f1, std::vector<double>& f2) {
  ThetaField theta = sampler.sample(replica);
  const std::size_t sites = sampler.geo.sites();
  f1.assign(length * sites, 0.0);
  f2.assign(length * sites, 0.0);
  for (std::uint64_t t = 0; t < length; ++t) {
    for (std::size_t x = 0; x < sites; ++x) {
      f1[t * sites + x] = F1(theta.site(x));
      f2[t * sites + x] = F2(theta.site(x));
    }
    if (t + 1 < length) theta = step_theta(theta, sampler.map);
  }
}

BlockTable lag_blocks(const SRBSampler& sampler, const Observable& F1, const Observable& F2,
                      const std::vector<int>& lags, std::uint64_t length, std::uint64_t replica) {
  if (lags.empty()) throw std::invalid_argument("time_correlations: no lags");
  const int max_lag = *std::max_element(lags.begin(), lags.end());
  if (*std::min_element(lags.begin(), lags.end()) < 0) throw std::invalid_argument("time_correlations: negative lag");
  if (length <= static_cast<std::uint64_t>(max_lag))
    throw std::invalid_argument("time_correlations: window shorter than the lag");
  const std::uint64_t usable = length - max_lag;
  const std::uint64_t block = std::max<std::uint64_t>(4 * std::max(max_lag, 1), 1);
  const std::uint64_t nb = usable / block;
  if (nb < 2) throw std::invalid_argument("time_correlations: window too short for two jackknife blocks");

  std::vector<double> f1, f2;
  record_series(sampler, F1, F2, length, replica, f1, f2);
  const std::size_t sites = sampler.geo.sites();
  BlockTable table(lags.size(), std::vector<PairSums>(nb));
  for (std::size_t li = 0; li < lags.size(); ++li) {
    const std::uint64_t lag = lags[li];
    for (std::uint64_t b = 0; b < nb; ++b)
      for (std::uint64_t t = b * block; t < (b + 1) * block; ++t)
        for (std::size_t x = 0; x < sites; ++x) table[li][b].add(f1[t * sites + x], f2[(t + lag) * sites + x]);
  }
  return table;
}

std::size_t jackknife_groups(std::size_t n) { return std::min<std::size_t>(n, 32); }

}  // namespace

Observable cos_observable() {
  return {"cos", 1.0, false, [](const double* th) { return std::cos(kTwoPi * th[0]); }};
}

Observable sawtooth_observable() {
  return {"sawtooth", 0.5, false, [](const double* th) { return th[0] - 0.5; }};
}

Observable position_observable() {
  return {"position", 1.0, true, [](const double* th) { return th[0]; }};
}

Observable raised_cos_observable() {
  return {"raised_cos", 2.0, true, [](const double* th) { return 1.0 + std::cos(kTwoPi * th[0]); }};
}

ThetaField SRBSampler::initial(std::uint64_t replica) const {
  Rng rng(master_seed, "srb", replica);
  const int comps = map.components();
  std::vector<double> v(geo.sites() * comps);
  for (double& x : v) x = rng.uniform();
  return ThetaField(geo, comps, std::move(v), stream_seed(master_seed, "srb-refresh", replica));
}

ThetaField SRBSampler::sample(std::uint64_t replica) const {
  map.validate();
  ThetaField th = initial(replica);
  for (std::uint64_t t = 0; t < burn_in; ++t) th = step_theta(th, map);
  return th;
}

std::vector<ThetaField> sample_srb(const SRBSampler& sampler, std::size_t n_samples, std::uint64_t first) {
  if (n_samples < 1) throw std::invalid_argument("sample_srb: n_samples must be >= 1");
  std::vector<ThetaField> out(n_samples);
  const auto n = static_cast<std::ptrdiff_t>(n_samples);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < n; ++i) out[i] = sampler.sample(first + static_cast<std::uint64_t>(i));
  return out;
}

std::vector<CorrelationEstimate> time_correlations(const SRBSampler& sampler, const Observable& F1,
                                                   const Observable& F2, const std::vector<int>& lags,
                                                   std::uint64_t length, std::uint64_t replica) {
  const auto table = lag_blocks(sampler, F1, F2, lags, length, replica);
  std::vector<CorrelationEstimate> out;
  for (std::size_t li = 0; li < lags.size(); ++li) out.push_back(summarize(F1.name + "," + F2.name, lags[li], table[li]));
  return out;
}

std::vector<CorrelationEstimate> space_correlations(const SRBSampler& sampler, const Observable& F1,
                                                    const Observable& F2, const std::vector<int>& separations,
                                                    std::size_t n_samples) {
  if (n_samples < 2) throw std::invalid_argument("space_correlations: need >= 2 samples");
  const auto samples = sample_srb(sampler, n_samples);
  const Geometry& geo = sampler.geo;
  const std::size_t groups = jackknife_groups(n_samples);
  std::vector<CorrelationEstimate> out;
  for (int r : separations) {
    std::vector<PairSums> blocks(groups);
    for (std::size_t s = 0; s < n_samples; ++s) {
      auto& blk = blocks[s * groups / n_samples];
      for (std::size_t x = 0; x < geo.sites(); ++x)
        blk.add(F1(samples[s].site(x)), F2(samples[s].site(geo.translate(x, Coord{r, 0, 0}))));
    }
    out.push_back(summarize(F1.name + "," + F2.name, r, blocks));
  }
  return out;
}

ProductBoundReport product_bound_check(const SRBSampler& sampler, const std::vector<Observable>& F, int R,
                                       std::size_t n_samples, Placement placement) {
  const std::size_t k = F.size();
  if (k < 1) throw std::invalid_argument("product_bound_check: no observables");
  if (R < 0) throw std::invalid_argument("product_bound_check: negative separation");
  for (const auto& f : F)
    if (!f.nonnegative) throw std::invalid_argument("product_bound_check: observables must be nonnegative");

  // Per jackknife group: sum of the product, sums of each factor, count.
  struct Group {
    double prod = 0;
    std::vector<double> each;
    double n = 0;
  };
  const Geometry& geo = sampler.geo;
  std::vector<Group> groups;

  if (placement == Placement::Time) {
    const std::uint64_t span = static_cast<std::uint64_t>(k - 1) * R;
    const std::uint64_t length = n_samples + span;
    std::vector<std::vector<double>> series(k);
    ThetaField th = sampler.sample(0);
    for (auto& s : series) s.resize(length * geo.sites());
    for (std::uint64_t t = 0; t < length; ++t) {
      for (std::size_t x = 0; x < geo.sites(); ++x)
        for (std::size_t i = 0; i < k; ++i) series[i][t * geo.sites() + x] = F[i](th.site(x));
      if (t + 1 < length) th = step_theta(th, sampler.map);
    }
    const std::uint64_t block = std::max<std::uint64_t>(4 * std::max<std::uint64_t>(span, 1), 16);
    const std::uint64_t nb = n_samples / block;
    if (nb < 2) throw std::invalid_argument("product_bound_check: trajectory too short for jackknife blocks");
    groups.assign(nb, Group{0, std::vector<double>(k, 0.0), 0});
    for (std::uint64_t b = 0; b < nb; ++b)
      for (std::uint64_t t = b * block; t < (b + 1) * block; ++t)
        for (std::size_t x = 0; x < geo.sites(); ++x) {
          double p = 1.0;
          for (std::size_t i = 0; i < k; ++i) {
            const double v = series[i][(t + i * R) * geo.sites() + x];
            p *= v;
            groups[b].each[i] += v;
          }
          groups[b].prod += p;
          groups[b].n += 1;
        }
  } else {
    if (n_samples < 2) throw std::invalid_argument("product_bound_check: need >= 2 samples");
    if (static_cast<std::size_t>(k - 1) * R >= static_cast<std::size_t>(geo.side()))
      throw std::invalid_argument("product_bound_check: placement wraps around the box");
    const auto samples = sample_srb(sampler, n_samples);
    const std::size_t ng = jackknife_groups(n_samples);
    groups.assign(ng, Group{0, std::vector<double>(k, 0.0), 0});
    for (std::size_t s = 0; s < n_samples; ++s) {
      auto& g = groups[s * ng / n_samples];
      for (std::size_t x = 0; x < geo.sites(); ++x) {
        double p = 1.0;
        for (std::size_t i = 0; i < k; ++i) {
          const double v = F[i](samples[s].site(geo.translate(x, Coord{static_cast<int>(i) * R, 0, 0})));
          p *= v;
          g.each[i] += v;
        }
        g.prod += p;
        g.n += 1;
      }
    }
  }

  Group total{0, std::vector<double>(k, 0.0), 0};
  for (const auto& g : groups) {
    total.prod += g.prod;
    total.n += g.n;
    for (std::size_t i = 0; i < k; ++i) total.each[i] += g.each[i];
  }
  auto ratio_of = [&](const Group& s, double* pm) {
    double prod_means = 1.0;
    for (std::size_t i = 0; i < k; ++i) prod_means *= s.each[i] / s.n;
    if (pm) *pm = prod_means;
    return (s.prod / s.n) / prod_means;
  };

  ProductBoundReport rep;
  rep.separation = R;
  rep.k = k;
  rep.mean_product = total.prod / total.n;
  rep.ratio = ratio_of(total, &rep.product_of_means);
  rep.min_slack = std::max(0.0, std::log(rep.ratio));
  std::vector<double> loo_ratio, loo_slack;
  for (const auto& g : groups) {
    Group rest = total;
    rest.prod -= g.prod;
    rest.n -= g.n;
    for (std::size_t i = 0; i < k; ++i) rest.each[i] -= g.each[i];
    const double r = ratio_of(rest, nullptr);
    loo_ratio.push_back(r);
    loo_slack.push_back(std::max(0.0, std::log(r)));
  }
  rep.ratio_stderr = jackknife_stderr(loo_ratio);
  rep.slack_stderr = jackknife_stderr(loo_slack);
  return rep;
}

DecayEstimate time_correlation_decay(const SRBSampler& sampler, const Observable& F, const std::vector<int>& lags,
                                     std::uint64_t length, std::uint64_t replica, double min_significance) {
  const auto table = lag_blocks(sampler, F, F, lags, length, replica);
  DecayEstimate out;
  std::vector<std::size_t> used;
  std::vector<double> dist, cov;
  for (std::size_t li = 0; li < lags.size(); ++li) {
    out.covariances.push_back(summarize(F.name + "," + F.name, lags[li], table[li]));
    const auto& c = out.covariances.back();
    if (std::abs(c.covariance) >= min_significance * c.std_error) {
      used.push_back(li);
      out.fitted_lags.push_back(lags[li]);
      dist.push_back(lags[li]);
      cov.push_back(c.covariance);
    }
  }
  if (used.size() < 3) throw std::runtime_error("time_correlation_decay: fewer than three resolved lags");
  out.fit = decay_rate_fit(dist, cov);
  const std::size_t nb = table.front().size();
  std::vector<double> loo_m;
  for (std::size_t b = 0; b < nb; ++b) {
    std::vector<double> c;
    for (std::size_t li : used) {
      PairSums rest;
      for (std::size_t j = 0; j < nb; ++j)
        if (j != b) rest += table[li][j];
      c.push_back(rest.covariance());
    }
    loo_m.push_back(decay_rate_fit(dist, c).m);
  }
  out.m_stderr = jackknife_stderr(loo_m);
  return out;
}

KSResult ks_uniform(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("ks_uniform: no values");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  double D = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    D = std::max({D, hi - values[i], values[i] - lo});
  }
  const double sn = std::sqrt(n);
  const double lambda = (sn + 0.12 + 0.11 / sn) * D;
  double p = 1.0;
  if (lambda > 0.2) {
    double s = 0.0;
    for (int j = 1; j <= 100; ++j) s += (j % 2 ? 1.0 : -1.0) * std::exp(-2.0 * j * j * lambda * lambda);
    p = std::clamp(2.0 * s, 0.0, 1.0);
  }
  return {D, p};
}

double jackknife_stderr(const std::vector<double>& loo) {
  const double n = static_cast<double>(loo.size());
  if (loo.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : loo) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : loo) ss += (v - mean) * (v - mean);
  return std::sqrt((n - 1.0) / n * ss);
}

}  // namespace cmldiff
