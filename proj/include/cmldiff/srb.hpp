#pragma once

// Sampling the invariant measure of the chaotic coordinates by burn-in from
// Lebesgue initial data, and empirical correlation estimates.

#include <functional>
#include <string>
#include <vector>

#include "cmldiff/lattice.hpp"
#include "cmldiff/norms.hpp"

namespace cmldiff {

/// Bounded single-site observable of the chaotic coordinates.
struct Observable {
  std::string name;
  double sup_norm = 1.0;
  bool nonnegative = false;
  std::function<double(const double* theta)> f;

  double operator()(const double* theta) const { return f(theta); }
};

Observable cos_observable();        ///< cos 2 pi theta_1, mean zero under Lebesgue
Observable sawtooth_observable();   ///< theta_1 - 1/2
Observable position_observable();   ///< theta_1, nonnegative
Observable raised_cos_observable(); ///< 1 + cos 2 pi theta_1, nonnegative

struct SRBSampler {
  Geometry geo;
  LocalChaoticMap map;
  std::uint64_t burn_in = 64;
  std::uint64_t master_seed = 0;

  /// Lebesgue draw for replica i, with its own bit-refresh key.
  ThetaField initial(std::uint64_t replica) const;
  /// initial(replica) after burn_in steps. burn_in = 0 returns the raw draw.
  ThetaField sample(std::uint64_t replica) const;
};

/// Replicas first .. first + n - 1; independent streams, parallel over replicas.
std::vector<ThetaField> sample_srb(const SRBSampler& sampler, std::size_t n_samples, std::uint64_t first = 0);

struct CorrelationEstimate {
  std::string observables;
  /// Time lag or spatial separation along axis 0.
  int separation = 0;
  double mean_product = 0.0;
  double mean1 = 0.0;
  double mean2 = 0.0;
  double covariance = 0.0;
  double std_error = 0.0;
  std::size_t count = 0;
};

/// Time-lag covariances cov(F1(theta(t, x)), F2(theta(t + lag, x))) along one
/// trajectory of `length` steps after burn-in, pooled over sites, with
/// block-jackknife errors (block = 4 * max lag). Throws when length <= max lag.
std::vector<CorrelationEstimate> time_correlations(const SRBSampler& sampler, const Observable& F1,
                                                   const Observable& F2, const std::vector<int>& lags,
                                                   std::uint64_t length, std::uint64_t replica = 0);

/// Equal-time covariances cov(F1(theta(x)), F2(theta(x + r e_0))) over
/// independent samples, pooled over x, with grouped-jackknife errors.
std::vector<CorrelationEstimate> space_correlations(const SRBSampler& sampler, const Observable& F1,
                                                    const Observable& F2, const std::vector<int>& separations,
                                                    std::size_t n_samples);

enum class Placement { Time, Space };

struct ProductBoundReport {
  int separation = 0;
  std::size_t k = 0;
  double mean_product = 0.0;
  double product_of_means = 0.0;
  double ratio = 1.0;
  double ratio_stderr = 0.0;
  /// Smallest s >= 0 with E[prod F] <= prod E[F] * exp(s): max(0, log ratio).
  double min_slack = 0.0;
  double slack_stderr = 0.0;
};

/// Compares E[prod_i F_i] with prod_i E[F_i] for nonnegative observables placed
/// R apart: at times t, t+R, ... on one site of a long trajectory (Time) or at
/// sites x, x+R e_0, ... of independent samples (Space). Jackknife errors.
ProductBoundReport product_bound_check(const SRBSampler& sampler, const std::vector<Observable>& F, int R,
                                       std::size_t n_samples, Placement placement);

struct DecayEstimate {
  DecayFit fit;
  /// Lags that entered the fit: those with |covariance| >= min_significance * stderr.
  std::vector<int> fitted_lags;
  /// Jackknife standard error of m.
  double m_stderr = 0.0;
  std::vector<CorrelationEstimate> covariances;
};

/// Exponential decay rate of time-lag covariances, with jackknife error on m.
/// Lags whose covariance is not resolved from zero are left out of the fit;
/// throws when fewer than three remain.
DecayEstimate time_correlation_decay(const SRBSampler& sampler, const Observable& F, const std::vector<int>& lags,
                                     std::uint64_t length, std::uint64_t replica = 0, double min_significance = 2.0);

struct KSResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// One-sample Kolmogorov-Smirnov test against Uniform[0, 1), asymptotic
/// distribution with the Stephens small-sample correction.
KSResult ks_uniform(std::vector<double> values);

/// Jackknife standard error from leave-one-out estimates.
double jackknife_stderr(const std::vector<double>& leave_one_out);

}  // namespace cmldiff
