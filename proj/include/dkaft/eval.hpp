#pragma once

#include <span>
#include <vector>

#include "dkaft/encoder.hpp"
#include "dkaft/gp.hpp"

namespace dkaft {

/// One evaluation pair: true time, predicted time and log-scale moments.
struct EvalPair {
  double z = 0.0;       // true time, days
  double z_hat = 0.0;   // predicted time
  double y = 0.0;       // log z
  double y_hat = 0.0;   // predictive mean of log z
  double sigma2 = 0.0;  // total predictive variance
  int event = 1;
};

EvalPair make_eval_pair(double z, const PredictiveDistribution& pred, int event = 1);

enum class PointEstimate { LogNormalMedian, LogNormalMean };

/// Point prediction in time units. The default exp(mu) is the log-normal
/// median; the mean variant adds half the predictive variance in the
/// exponent.
double point_prediction(const PredictiveDistribution& pred,
                        PointEstimate estimate = PointEstimate::LogNormalMedian);

/// Median of |z - z_hat|; even counts average the two middle values.
double mad(std::span<const EvalPair> pairs);

/// Root mean squared error on the log scale.
double rmse_log(std::span<const EvalPair> pairs);

/// Concordance over comparable pairs: the pair with distinct times whose
/// earlier time is an observed event; prediction ties count one half.
double c_index(std::span<const EvalPair> pairs);

/// Closed-form CRPS of a Gaussian forecast N(mu, sigma^2) at observation y.
double crps_gaussian(double y, double mu, double sigma);

enum class QPMetric { Mad, RmseLog };

struct QPPoint {
  double q = 0.0;
  double value = 0.0;
  std::size_t count = 0;
};
using QPCurve = std::vector<QPPoint>;

/// Metric over the pairs whose variance lies at or below each q-quantile of
/// the predictive variances (linear-interpolation quantiles, ties included).
QPCurve qp_curve(std::span<const EvalPair> pairs, std::size_t quantiles, QPMetric metric);

struct EcdfPoint {
  double residual = 0.0;
  double ecdf = 0.0;
  double normal_cdf = 0.0;
};

struct EcdfResult {
  std::vector<EcdfPoint> points;
  double ks = 0.0;  // sup |ECDF - Phi|
};

/// ECDF of the normalized residuals (y - y_hat)/sigma with the
/// Kolmogorov-Smirnov distance to the standard normal.
EcdfResult residual_ecdf_ks(std::span<const EvalPair> pairs);

/// Two-sided paired t-test p-value over per-fold metric values.
double paired_t_test(std::span<const double> metric_a, std::span<const double> metric_b);

/// Spearman rank correlation (average ranks on ties); 0 when either input is
/// constant.
double spearman_rho(std::span<const double> x, std::span<const double> y);

/// Monte-Carlo-dropout predictive for the linear head: mean and across-pass
/// variance of the per-pass means from stochastic encodes.
PredictiveDistribution mc_dropout_predict(const PatientRecord& record, ParameterStore& store,
                                          const EncoderConfig& cfg, std::size_t passes, Rng& rng);

}  // namespace dkaft
