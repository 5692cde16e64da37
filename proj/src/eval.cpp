#include "dkaft/eval.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "dkaft/errors.hpp"
#include "dkaft/math.hpp"

namespace dkaft {

EvalPair make_eval_pair(double z, const PredictiveDistribution& pred, int event) {
  if (!(z > 0.0)) throw DataError("make_eval_pair: time must be positive");
  EvalPair p;
  p.z = z;
  p.y = std::log(z);
  p.y_hat = pred.mu;
  p.z_hat = point_prediction(pred);
  p.sigma2 = pred.total_variance();
  p.event = event;
  return p;
}

double point_prediction(const PredictiveDistribution& pred, PointEstimate estimate) {
  if (estimate == PointEstimate::LogNormalMean)
    return std::exp(pred.mu + 0.5 * pred.total_variance());
  return std::exp(pred.mu);
}

namespace {

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  if (n % 2 == 1) return v[n / 2];
  return 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

double mad(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw DataError("mad: no evaluation pairs");
  std::vector<double> abs_err;
  abs_err.reserve(pairs.size());
  for (const auto& p : pairs) abs_err.push_back(std::fabs(p.z - p.z_hat));
  return median(std::move(abs_err));
}

double rmse_log(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw DataError("rmse_log: no evaluation pairs");
  double acc = 0.0;
  for (const auto& p : pairs) {
    const double r = p.y - p.y_hat;
    acc += r * r;
  }
  return std::sqrt(acc / static_cast<double>(pairs.size()));
}

double c_index(std::span<const EvalPair> pairs) {
  if (pairs.size() < 2) throw DataError("c_index: need at least 2 samples");
  double concordant = 0.0;
  std::size_t comparable = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    for (std::size_t j = i + 1; j < pairs.size(); ++j) {
      const EvalPair& a = pairs[i];
      const EvalPair& b = pairs[j];
      if (a.z == b.z) continue;
      const EvalPair& shorter = a.z < b.z ? a : b;
      const EvalPair& longer = a.z < b.z ? b : a;
      if (shorter.event != 1) continue;  // censored early time: ordering unknown
      ++comparable;
      if (shorter.z_hat < longer.z_hat)
        concordant += 1.0;
      else if (shorter.z_hat == longer.z_hat)
        concordant += 0.5;
    }
  }
  if (comparable == 0) throw DataError("c_index: no comparable pairs");
  return concordant / static_cast<double>(comparable);
}

double crps_gaussian(double y, double mu, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("crps_gaussian: sigma must be positive");
  const double u = (y - mu) / sigma;
  return sigma * (u * (2.0 * mathx::normal_cdf(u) - 1.0) + 2.0 * mathx::normal_pdf(u) -
                  1.0 / std::sqrt(std::numbers::pi));
}

QPCurve qp_curve(std::span<const EvalPair> pairs, std::size_t quantiles, QPMetric metric) {
  if (quantiles < 2) throw ConfigError("qp_curve: need at least 2 quantiles");
  if (pairs.size() < quantiles) throw DataError("qp_curve: fewer pairs than quantiles");
  std::vector<double> variances;
  variances.reserve(pairs.size());
  for (const auto& p : pairs) variances.push_back(p.sigma2);
  std::sort(variances.begin(), variances.end());

  QPCurve curve;
  std::vector<EvalPair> subset;
  for (std::size_t k = 1; k <= quantiles; ++k) {
    const double q = static_cast<double>(k) / static_cast<double>(quantiles);
    const double threshold = mathx::quantile_sorted(variances.data(), variances.size(), q);
    subset.clear();
    for (const auto& p : pairs)
      if (p.sigma2 <= threshold) subset.push_back(p);
    const double value = metric == QPMetric::Mad ? mad(subset) : rmse_log(subset);
    curve.push_back(QPPoint{q, value, subset.size()});
  }
  return curve;
}

EcdfResult residual_ecdf_ks(std::span<const EvalPair> pairs) {
  if (pairs.empty()) throw DataError("residual_ecdf_ks: no evaluation pairs");
  std::vector<double> r;
  r.reserve(pairs.size());
  for (const auto& p : pairs) {
    if (!(p.sigma2 > 0.0)) throw DomainError("residual_ecdf_ks: zero predictive variance");
    r.push_back((p.y - p.y_hat) / std::sqrt(p.sigma2));
  }
  std::sort(r.begin(), r.end());
  const double n = static_cast<double>(r.size());
  EcdfResult out;
  out.points.reserve(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    const double phi = mathx::normal_cdf(r[i]);
    const double hi = static_cast<double>(i + 1) / n;
    const double lo = static_cast<double>(i) / n;
    out.points.push_back(EcdfPoint{r[i], hi, phi});
    out.ks = std::max({out.ks, std::fabs(hi - phi), std::fabs(lo - phi)});
  }
  return out;
}

double paired_t_test(std::span<const double> metric_a, std::span<const double> metric_b) {
  if (metric_a.size() != metric_b.size() || metric_a.size() < 2)
    throw DataError("paired_t_test: need equal-length inputs with at least 2 entries");
  const std::size_t k = metric_a.size();
  double mean = 0.0;
  for (std::size_t i = 0; i < k; ++i) mean += metric_a[i] - metric_b[i];
  mean /= static_cast<double>(k);
  double ss = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    const double d = metric_a[i] - metric_b[i] - mean;
    ss += d * d;
  }
  const double var = ss / static_cast<double>(k - 1);
  if (!(var > 0.0)) throw DataError("paired_t_test: zero variance of differences (degenerate)");
  const double t = mean / std::sqrt(var / static_cast<double>(k));
  return mathx::student_t_two_sided_p(t, static_cast<double>(k - 1));
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw DataError("spearman_rho: need equal-length inputs with at least 2 entries");
  std::vector<double> rx = average_ranks(x);
  std::vector<double> ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += rx[i];
    my += ry[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

PredictiveDistribution mc_dropout_predict(const PatientRecord& record, ParameterStore& store,
                                          const EncoderConfig& cfg, std::size_t passes, Rng& rng) {
  if (passes < 2) throw ConfigError("mc_dropout_predict: need at least 2 passes");
  std::vector<double> mus(passes);
  double obs2 = 0.0;
  for (std::size_t p = 0; p < passes; ++p) {
    ad::Tensor h = encode_value(store, cfg, record, /*dropout_active=*/true, &rng);
    PredictiveDistribution d = linear_head_predict(store, {h.data(), h.size()});
    mus[p] = d.mu;
    obs2 = d.sigma_obs2;
  }
  bool all_equal = true;
  for (double m : mus)
    if (m != mus[0]) all_equal = false;
  double mean = 0.0;
  for (double m : mus) mean += m;
  mean /= static_cast<double>(passes);
  double ss = 0.0;
  for (double m : mus) ss += (m - mean) * (m - mean);
  PredictiveDistribution out;
  // identical passes (e.g. dropout rate 0) have exactly zero spread; the
  // accumulated mean would otherwise leave ~1 ulp of it
  out.mu = all_equal ? mus[0] : mean;
  out.sigma_f2 = all_equal ? 0.0 : ss / static_cast<double>(passes - 1);
  out.sigma_obs2 = obs2;
  return out;
}

}  // namespace dkaft
