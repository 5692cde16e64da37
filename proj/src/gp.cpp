#include "dkaft/gp.hpp"

#include <array>
#include <cmath>
#include <numbers>

#include "dkaft/errors.hpp"
#include "dkaft/math.hpp"

namespace dkaft {

using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {
constexpr double kLog2Pi = 1.8378770664093453;
}

HeadKind head_from_string(const std::string& s) {
  if (s == "exact") return HeadKind::Exact;
  if (s == "svgp") return HeadKind::Svgp;
  if (s == "ppgp") return HeadKind::Ppgp;
  if (s == "linear") return HeadKind::Linear;
  throw ConfigError("unknown head '" + s + "' (expected exact|svgp|ppgp|linear)");
}

std::string head_to_string(HeadKind k) {
  switch (k) {
    case HeadKind::Exact: return "exact";
    case HeadKind::Svgp: return "svgp";
    case HeadKind::Ppgp: return "ppgp";
    case HeadKind::Linear: return "linear";
  }
  return "?";
}

double rbf(std::span<const double> a, std::span<const double> b, double lengthscale,
           double signal_scale) {
  if (a.size() != b.size())
    throw ShapeError("rbf: input lengths differ (" + std::to_string(a.size()) + " vs " +
                     std::to_string(b.size()) + ")");
  double d2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    d2 += d * d;
  }
  return signal_scale * signal_scale * std::exp(-d2 / (2.0 * lengthscale * lengthscale));
}

void init_gp_params(ParameterStore& store, std::size_t latent_dim) {
  store.add("gp.raw_lengthscale",
            Tensor::scalar(mathx::softplus_inv(std::sqrt(static_cast<double>(latent_dim)))));
  store.add("gp.raw_signal", Tensor::scalar(mathx::softplus_inv(1.0)));
  store.add("gp.raw_noise", Tensor::scalar(mathx::softplus_inv(1.0)));
}

GPHyper gp_hyper_values(const ParameterStore& store) {
  GPHyper h;
  h.lengthscale = mathx::softplus(store.value("gp.raw_lengthscale").scalar_value());
  h.signal_scale = mathx::softplus(store.value("gp.raw_signal").scalar_value());
  h.noise_scale = mathx::softplus(store.value("gp.raw_noise").scalar_value());
  return h;
}

void init_linear_head_params(ParameterStore& store, std::size_t latent_dim) {
  store.add("head.beta", Tensor(Shape{latent_dim}));
  store.add("head.bias", Tensor::scalar(0.0));
}

KernelVars kernel_vars(ParamCtx& ctx) {
  ad::Tape& t = ctx.tape();
  Var ell = ad::softplus(t, ctx("gp.raw_lengthscale"));
  Var sig = ad::softplus(t, ctx("gp.raw_signal"));
  return KernelVars{ell, ad::square(t, sig)};
}

Var noise2_var(ParamCtx& ctx) {
  ad::Tape& t = ctx.tape();
  return ad::square(t, ad::softplus(t, ctx("gp.raw_noise")));
}

Var noise_std_var(ParamCtx& ctx) { return ad::softplus(ctx.tape(), ctx("gp.raw_noise")); }

Var rbf_gram(ad::Tape& t, Var points, const KernelVars& k) {
  const std::size_t n = t.value(points).rows();
  Var gram_hh = ad::matmul(t, points, ad::transpose(t, points));
  Var sq = ad::diag_part(t, gram_hh);
  Var col = ad::broadcast_to(t, ad::reshape(t, sq, {n, 1}), {n, n});
  Var rowv = ad::broadcast_to(t, ad::reshape(t, sq, {1, n}), {n, n});
  Var d2 = ad::clamp_min(t, ad::sub(t, ad::add(t, col, rowv), ad::mul_scalar(t, gram_hh, 2.0)), 0.0);
  Var q = ad::div(t, d2, ad::mul_scalar(t, ad::square(t, k.lengthscale), 2.0));
  return ad::mul(t, k.signal2, ad::exp(t, ad::neg(t, q)));
}

Var rbf_cross(ad::Tape& t, Var a, Var b, const KernelVars& k) {
  const std::size_t m = t.value(a).rows();
  const std::size_t n = t.value(b).rows();
  Var ra = ad::sum_axis(t, ad::square(t, a), 1);  // (m)
  Var rb = ad::sum_axis(t, ad::square(t, b), 1);  // (n)
  Var cross = ad::matmul(t, a, ad::transpose(t, b));
  Var col = ad::broadcast_to(t, ad::reshape(t, ra, {m, 1}), {m, n});
  Var rowv = ad::broadcast_to(t, ad::reshape(t, rb, {1, n}), {m, n});
  Var d2 = ad::clamp_min(t, ad::sub(t, ad::add(t, col, rowv), ad::mul_scalar(t, cross, 2.0)), 0.0);
  Var q = ad::div(t, d2, ad::mul_scalar(t, ad::square(t, k.lengthscale), 2.0));
  return ad::mul(t, k.signal2, ad::exp(t, ad::neg(t, q)));
}

Var variational_chol_var(ParamCtx& ctx) {
  ad::Tape& t = ctx.tape();
  Var raw = ctx("gp.variational_chol_raw");
  const std::size_t m = t.value(raw).rows();
  Tensor strict(Shape{m, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < i; ++j) strict.at(i, j) = 1.0;
  Var lower = ad::mul(t, raw, ad::constant(t, std::move(strict)));
  Var diag = ad::diag_embed(t, ad::softplus(t, ad::diag_part(t, raw)));
  return ad::add(t, lower, diag);
}

Var kl_divergence(ad::Tape& t, Var chol_vv, Var variational_mean, Var variational_chol) {
  const std::size_t m = t.value(variational_mean).size();
  Var trace_term = ad::sum(t, ad::square(t, ad::tri_solve(t, chol_vv, variational_chol)));
  Var quad_term = ad::sum(t, ad::square(t, ad::tri_solve(t, chol_vv, variational_mean)));
  Var logdets = ad::sub(t, ad::logdet_from_chol(t, chol_vv), ad::logdet_from_chol(t, variational_chol));
  Var inner = ad::add(t, ad::add(t, trace_term, quad_term), logdets);
  return ad::mul_scalar(t, ad::add_scalar(t, inner, -static_cast<double>(m)), 0.5);
}

namespace {

// Predictive mean / function variance for rows of `latents` given a factored
// K_vv and the variational state; shared by SVGP, PPGP and censored terms.
struct SparseMoments {
  Var mean;  // (n)
  Var fvar;  // (n), clamped at 0
};

SparseMoments sparse_moments(ad::Tape& t, Var chol_vv, Var inducing, Var variational_mean,
                             Var variational_chol, Var latents, const KernelVars& k) {
  const std::size_t n = t.value(latents).rows();
  Var kuh = rbf_cross(t, inducing, latents, k);           // (m, n)
  Var a = ad::tri_solve(t, chol_vv, kuh);                 // L^{-1} K_uh
  Var wm = ad::tri_solve(t, chol_vv, variational_mean);   // L^{-1} m
  Var mean = ad::matmul(t, ad::transpose(t, a), wm);      // (n)
  Var c = ad::tri_solve(t, chol_vv, a, /*transposed=*/true);  // K_vv^{-1} K_uh
  Var d = ad::matmul(t, ad::transpose(t, variational_chol), c);
  Var k_diag = ad::mul(t, k.signal2, ad::constant(t, Tensor(Shape{n}, 1.0)));
  Var fvar = ad::clamp_min(
      t,
      ad::add(t, ad::sub(t, k_diag, ad::sum_axis(t, ad::square(t, a), 0)),
              ad::sum_axis(t, ad::square(t, d), 0)),
      0.0);
  return {mean, fvar};
}

// log survival of the predictive log-normal at raw times z.
Var censored_log_sf(ad::Tape& t, Var mean, Var fvar, Var noise2, Var noise_std,
                    const Tensor& z, SurvivalDenominator mode) {
  for (std::size_t i = 0; i < z.size(); ++i)
    if (!(z[i] > 0.0)) throw DomainError("censored_objective: censored time must be positive");
  Tensor logz(z.shape());
  for (std::size_t i = 0; i < z.size(); ++i) logz[i] = std::log(z[i]);
  Var s;
  if (mode == SurvivalDenominator::VarianceSum) {
    s = ad::sqrt(t, ad::add(t, fvar, noise2));
  } else {
    s = ad::add(t, ad::sqrt(t, ad::clamp_min(t, fvar, 1e-12)), noise_std);
  }
  Var u = ad::div(t, ad::sub(t, ad::constant(t, std::move(logz)), mean), s);
  return ad::sum(t, ad::gauss_log_sf(t, u));
}

// 0.5*n*log(2*pi*sigma2) + sum(resid^2) / (2*sigma2) with a shared rank-0 variance
Var gauss_nll_shared_var(ad::Tape& t, Var mean, const Tensor& y, Var variance) {
  const std::size_t n = y.size();
  Var resid = ad::sub(t, ad::constant(t, y), mean);
  Var quad = ad::div(t, ad::sum(t, ad::square(t, resid)), ad::mul_scalar(t, variance, 2.0));
  Var logpart = ad::mul_scalar(t, ad::log(t, variance), 0.5 * static_cast<double>(n));
  return ad::add(t, ad::add_scalar(t, logpart, 0.5 * static_cast<double>(n) * kLog2Pi), quad);
}

// per-sample variances: 0.5*sum(log(2*pi*var_i)) + sum(resid_i^2 / (2*var_i))
Var gauss_nll_per_sample_var(ad::Tape& t, Var mean, const Tensor& y, Var variances) {
  const std::size_t n = y.size();
  Var resid = ad::sub(t, ad::constant(t, y), mean);
  Var quad = ad::sum(t, ad::div(t, ad::square(t, resid), ad::mul_scalar(t, variances, 2.0)));
  Var logpart = ad::mul_scalar(t, ad::sum(t, ad::log(t, variances)), 0.5);
  return ad::add_scalar(t, ad::add(t, logpart, quad), 0.5 * static_cast<double>(n) * kLog2Pi);
}

Var exact_head_objective(ParamCtx& ctx, const ObjectiveBatch& batch, SurvivalDenominator mode,
                         const ad::JitterPolicy& policy) {
  ad::Tape& t = ctx.tape();
  const std::size_t n_obs = batch.observed();
  if (n_obs == 0) throw DataError("exact head: needs at least one observed sample");
  KernelVars k = kernel_vars(ctx);
  Var noise2 = noise2_var(ctx);
  Var gram = rbf_gram(t, batch.latents_observed, k);
  Var shifted = ad::add(t, gram, ad::mul(t, noise2, ad::constant(t, Tensor::eye(n_obs))));
  ad::CholVar c = ad::cholesky(t, shifted, policy);
  Var w = ad::tri_solve(t, c.lower, ad::constant(t, batch.y_observed));
  Var loss = ad::add_scalar(
      t,
      ad::mul_scalar(t, ad::add(t, ad::dot(t, w, w), ad::logdet_from_chol(t, c.lower)), 0.5),
      0.5 * static_cast<double>(n_obs) * kLog2Pi);
  if (batch.censored() > 0) {
    // predictive at the censored latents, conditioned on the observed ones
    Var kstar = rbf_cross(t, batch.latents_observed, batch.latents_censored, k);
    Var a = ad::tri_solve(t, c.lower, kstar);
    Var mean = ad::matmul(t, ad::transpose(t, a), w);
    Var k_diag = ad::mul(t, k.signal2,
                         ad::constant(t, Tensor(Shape{batch.censored()}, 1.0)));
    Var fvar = ad::clamp_min(t, ad::sub(t, k_diag, ad::sum_axis(t, ad::square(t, a), 0)), 0.0);
    Var log_sf = censored_log_sf(t, mean, fvar, noise2, noise_std_var(ctx), batch.z_censored, mode);
    loss = ad::sub(t, loss, log_sf);
  }
  return loss;
}

Var sparse_head_objective(ParamCtx& ctx, HeadKind kind, const ObjectiveBatch& batch,
                          std::size_t n_total, SurvivalDenominator mode,
                          const ad::JitterPolicy& policy) {
  ad::Tape& t = ctx.tape();
  const std::size_t n_obs = batch.observed();
  const std::size_t n_cens = batch.censored();
  if (n_obs + n_cens == 0) throw DataError("sparse head: empty batch");
  if (n_total < n_obs + n_cens)
    throw ConfigError("sparse head: n_total smaller than the batch");

  KernelVars k = kernel_vars(ctx);
  Var noise2 = noise2_var(ctx);
  Var inducing = ctx("gp.inducing");
  Var vmean = ctx("gp.variational_mean");
  Var vchol = variational_chol_var(ctx);
  Var gram_vv = rbf_gram(t, inducing, k);
  ad::CholVar c = ad::cholesky(t, gram_vv, policy);
  Var kl = kl_divergence(t, c.lower, vmean, vchol);

  Var likelihood;  // positive = negative log-likelihood contributions
  bool has_likelihood = false;
  if (n_obs > 0) {
    SparseMoments mo = sparse_moments(t, c.lower, inducing, vmean, vchol, batch.latents_observed, k);
    Var nll;
    if (kind == HeadKind::Svgp) {
      Var penalty = ad::div(t, ad::sum(t, mo.fvar), ad::mul_scalar(t, noise2, 2.0));
      nll = ad::add(t, gauss_nll_shared_var(t, mo.mean, batch.y_observed, noise2), penalty);
    } else {
      Var variances = ad::add(t, mo.fvar, noise2);
      nll = gauss_nll_per_sample_var(t, mo.mean, batch.y_observed, variances);
    }
    likelihood = nll;
    has_likelihood = true;
  }
  if (n_cens > 0) {
    SparseMoments mc = sparse_moments(t, c.lower, inducing, vmean, vchol, batch.latents_censored, k);
    Var log_sf = censored_log_sf(t, mc.mean, mc.fvar, noise2, noise_std_var(ctx), batch.z_censored, mode);
    Var neg_sf = ad::neg(t, log_sf);
    likelihood = has_likelihood ? ad::add(t, likelihood, neg_sf) : neg_sf;
    has_likelihood = true;
  }
  const double scale = static_cast<double>(n_total) / static_cast<double>(n_obs + n_cens);
  return ad::add(t, ad::mul_scalar(t, likelihood, scale), kl);
}

Var linear_head_objective(ParamCtx& ctx, const ObjectiveBatch& batch, SurvivalDenominator mode) {
  ad::Tape& t = ctx.tape();
  if (batch.observed() + batch.censored() == 0) throw DataError("linear head: empty batch");
  Var noise2 = noise2_var(ctx);
  Var beta = ctx("head.beta");
  Var bias = ctx("head.bias");
  Var loss;
  bool has = false;
  if (batch.observed() > 0) {
    Var mean = ad::add(t, ad::matmul(t, batch.latents_observed, beta), bias);
    loss = gauss_nll_shared_var(t, mean, batch.y_observed, noise2);
    has = true;
  }
  if (batch.censored() > 0) {
    Var mean = ad::add(t, ad::matmul(t, batch.latents_censored, beta), bias);
    Var fvar = ad::constant(t, Tensor(Shape{batch.censored()}));
    Var log_sf = censored_log_sf(t, mean, fvar, noise2, noise_std_var(ctx), batch.z_censored, mode);
    Var neg_sf = ad::neg(t, log_sf);
    loss = has ? ad::add(t, loss, neg_sf) : neg_sf;
  }
  return loss;
}

}  // namespace

Var censored_objective(ParamCtx& ctx, HeadKind kind, const ObjectiveBatch& batch,
                       std::size_t n_total, SurvivalDenominator mode,
                       const ad::JitterPolicy& policy) {
  switch (kind) {
    case HeadKind::Exact: return exact_head_objective(ctx, batch, mode, policy);
    case HeadKind::Svgp:
    case HeadKind::Ppgp: return sparse_head_objective(ctx, kind, batch, n_total, mode, policy);
    case HeadKind::Linear: return linear_head_objective(ctx, batch, mode);
  }
  throw ConfigError("censored_objective: unknown head");
}

Var exact_gp_objective(ParamCtx& ctx, Var latents, const Tensor& y,
                       const ad::JitterPolicy& policy) {
  ObjectiveBatch b;
  b.latents_observed = latents;
  b.y_observed = y;
  return censored_objective(ctx, HeadKind::Exact, b, y.size(), SurvivalDenominator::VarianceSum,
                            policy);
}

Var svgp_objective(ParamCtx& ctx, Var latents, const Tensor& y, std::size_t n_total,
                   const ad::JitterPolicy& policy) {
  ObjectiveBatch b;
  b.latents_observed = latents;
  b.y_observed = y;
  return censored_objective(ctx, HeadKind::Svgp, b, n_total, SurvivalDenominator::VarianceSum,
                            policy);
}

Var ppgp_objective(ParamCtx& ctx, Var latents, const Tensor& y, std::size_t n_total,
                   const ad::JitterPolicy& policy) {
  ObjectiveBatch b;
  b.latents_observed = latents;
  b.y_observed = y;
  return censored_objective(ctx, HeadKind::Ppgp, b, n_total, SurvivalDenominator::VarianceSum,
                            policy);
}

Var linear_aft_objective(ParamCtx& ctx, Var latents, const Tensor& y) {
  ObjectiveBatch b;
  b.latents_observed = latents;
  b.y_observed = y;
  return censored_objective(ctx, HeadKind::Linear, b, y.size());
}

// ---- plain prediction ------------------------------------------------------

namespace {

Tensor gram_matrix(const Tensor& points, const GPHyper& hyper) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  Tensor k(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) {
    k.at(i, i) = hyper.signal2();
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v = rbf({points.data() + i * d, d}, {points.data() + j * d, d},
                           hyper.lengthscale, hyper.signal_scale);
      k.at(i, j) = v;
      k.at(j, i) = v;
    }
  }
  return k;
}

Tensor cross_vector(const Tensor& points, std::span<const double> x, const GPHyper& hyper) {
  const std::size_t n = points.rows();
  const std::size_t d = points.cols();
  Tensor k(Shape{n});
  for (std::size_t i = 0; i < n; ++i)
    k[i] = rbf({points.data() + i * d, d}, x, hyper.lengthscale, hyper.signal_scale);
  return k;
}

}  // namespace

ExactGPPredictor::ExactGPPredictor(Tensor train_latents, Tensor train_y, GPHyper hyper,
                                   const ad::JitterPolicy& policy)
    : train_latents_(std::move(train_latents)), hyper_(hyper) {
  const std::size_t n = train_latents_.rows();
  if (train_y.size() != n) throw ShapeError("exact predictor: latents and targets disagree");
  Tensor shifted = gram_matrix(train_latents_, hyper_);
  for (std::size_t i = 0; i < n; ++i) shifted.at(i, i) += hyper_.noise2();
  chol_ = cholesky_with_jitter(shifted, policy).lower;
  alpha_ = plain_trisolve(chol_, plain_trisolve(chol_, train_y, false), true);
}

PredictiveDistribution ExactGPPredictor::predict(std::span<const double> latent) const {
  Tensor kstar = cross_vector(train_latents_, latent, hyper_);
  PredictiveDistribution out;
  out.mu = t_dot(kstar, alpha_);
  Tensor v = plain_trisolve(chol_, kstar, false);
  out.sigma_f2 = std::max(hyper_.signal2() - t_dot(v, v), 0.0);
  out.sigma_obs2 = hyper_.noise2();
  return out;
}

PredictiveDistribution exact_gp_predict(const Tensor& train_latents, const Tensor& train_y,
                                        std::span<const double> latent, const GPHyper& hyper,
                                        const ad::JitterPolicy& policy) {
  return ExactGPPredictor(train_latents, train_y, hyper, policy).predict(latent);
}

SparsePredictor::SparsePredictor(Tensor inducing, Tensor variational_mean,
                                 Tensor variational_chol, GPHyper hyper,
                                 const ad::JitterPolicy& policy)
    : inducing_(std::move(inducing)),
      variational_chol_(std::move(variational_chol)),
      hyper_(hyper) {
  chol_vv_ = cholesky_with_jitter(gram_matrix(inducing_, hyper_), policy).lower;
  gamma_ = plain_trisolve(chol_vv_, plain_trisolve(chol_vv_, variational_mean, false), true);
}

SparsePredictor SparsePredictor::from_store(const ParameterStore& store,
                                            const ad::JitterPolicy& policy) {
  const Tensor& raw = store.value("gp.variational_chol_raw");
  const std::size_t m = raw.rows();
  Tensor chol(Shape{m, m});
  for (std::size_t i = 0; i < m; ++i) {
    chol.at(i, i) = mathx::softplus(raw.at(i, i));
    for (std::size_t j = 0; j < i; ++j) chol.at(i, j) = raw.at(i, j);
  }
  return SparsePredictor(store.value("gp.inducing"), store.value("gp.variational_mean"),
                         std::move(chol), gp_hyper_values(store), policy);
}

PredictiveDistribution SparsePredictor::predict(std::span<const double> latent) const {
  Tensor k = cross_vector(inducing_, latent, hyper_);
  PredictiveDistribution out;
  out.mu = t_dot(k, gamma_);
  Tensor a = plain_trisolve(chol_vv_, k, false);
  Tensor b = plain_trisolve(chol_vv_, a, true);
  Tensor c = t_matvec(t_transpose(variational_chol_), b);
  out.sigma_f2 = std::max(hyper_.signal2() - t_dot(a, a) + t_dot(c, c), 0.0);
  out.sigma_obs2 = hyper_.noise2();
  return out;
}

std::pair<double, double> svgp_predict(std::span<const double> latent, const Tensor& inducing,
                                       const Tensor& variational_mean,
                                       const Tensor& variational_chol, const GPHyper& hyper,
                                       const ad::JitterPolicy& policy) {
  SparsePredictor p(inducing, variational_mean, variational_chol, hyper, policy);
  PredictiveDistribution d = p.predict(latent);
  return {d.mu, d.sigma_f2};
}

PredictiveDistribution linear_head_predict(const ParameterStore& store,
                                           std::span<const double> latent) {
  const Tensor& beta = store.value("head.beta");
  if (beta.size() != latent.size())
    throw ShapeError("linear head: latent length " + std::to_string(latent.size()) +
                     " does not match beta " + std::to_string(beta.size()));
  PredictiveDistribution out;
  out.mu = store.value("head.bias").scalar_value();
  for (std::size_t i = 0; i < beta.size(); ++i) out.mu += beta[i] * latent[i];
  out.sigma_f2 = 0.0;
  const double noise = mathx::softplus(store.value("gp.raw_noise").scalar_value());
  out.sigma_obs2 = noise * noise;
  return out;
}

double kl_gaussian(const Tensor& gram_vv, const Tensor& variational_mean,
                   const Tensor& variational_chol) {
  ad::CholOutcome c = ad::plain_cholesky(gram_vv);
  if (!c.ok)
    throw FactorizationError("kl_gaussian: gram matrix not positive definite (smallest pivot " +
                                 std::to_string(c.smallest_pivot) + ")",
                             c.smallest_pivot);
  ad::Tape t;
  Var kl = kl_divergence(t, ad::constant(t, c.lower), ad::constant(t, variational_mean),
                         ad::constant(t, variational_chol));
  return t.value(kl).scalar_value();
}

namespace {

double survival_standardized(double z, const PredictiveDistribution& pred, bool paper_literal) {
  if (!(z > 0.0)) throw DomainError("lognormal_survival: z must be positive");
  const double s = paper_literal
                       ? std::sqrt(pred.sigma_f2) + std::sqrt(pred.sigma_obs2)
                       : std::sqrt(pred.sigma_f2 + pred.sigma_obs2);
  return (std::log(z) - pred.mu) / s;
}

}  // namespace

double lognormal_survival(double z, const PredictiveDistribution& pred, bool paper_literal) {
  return 0.5 * std::erfc(survival_standardized(z, pred, paper_literal) / std::numbers::sqrt2);
}

double log_lognormal_survival(double z, const PredictiveDistribution& pred, bool paper_literal) {
  return mathx::log_normal_sf(survival_standardized(z, pred, paper_literal));
}

void init_inducing(ParameterStore& store, const EncoderConfig& cfg,
                   const std::vector<PatientRecord>& sample, const ad::JitterPolicy& policy) {
  if (sample.empty()) throw ConfigError("init_inducing: need at least one record");
  const std::size_t m = sample.size();
  const std::size_t d = cfg.latent_dim();
  Tensor inducing(Shape{m, d});
  for (std::size_t i = 0; i < m; ++i) {
    Tensor h = encode_value(store, cfg, sample[i]);
    for (std::size_t j = 0; j < d; ++j) inducing.at(i, j) = h[j];
  }
  const GPHyper hyper = gp_hyper_values(store);
  ad::JitteredChol jc = ad::cholesky_with_jitter(gram_matrix(inducing, hyper), policy);
  Tensor raw(Shape{m, m});
  for (std::size_t i = 0; i < m; ++i) {
    raw.at(i, i) = mathx::softplus_inv(jc.lower.at(i, i));
    for (std::size_t j = 0; j < i; ++j) raw.at(i, j) = jc.lower.at(i, j);
  }
  store.add("gp.inducing", std::move(inducing));
  store.add("gp.variational_mean", Tensor(Shape{m}));
  store.add("gp.variational_chol_raw", std::move(raw));
}

}  // namespace dkaft
