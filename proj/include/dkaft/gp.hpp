#pragma once

#include <span>
#include <string>
#include <vector>

#include "dkaft/data.hpp"
#include "dkaft/encoder.hpp"
#include "dkaft/param_store.hpp"
#include "dkaft/tape.hpp"

namespace dkaft {

enum class HeadKind { Exact, Svgp, Ppgp, Linear };
enum class SurvivalDenominator { VarianceSum, PaperLiteral };

HeadKind head_from_string(const std::string& s);
std::string head_to_string(HeadKind k);

/// Per-sample Gaussian over log time-to-event. Total predictive variance is
/// sigma_f2 + sigma_obs2 by construction.
struct PredictiveDistribution {
  double mu = 0.0;
  double sigma_f2 = 0.0;
  double sigma_obs2 = 0.0;
  double total_variance() const { return sigma_f2 + sigma_obs2; }
};

/// RBF kernel value sigma_s^2 * exp(-|a-b|^2 / (2 l^2)).
double rbf(std::span<const double> a, std::span<const double> b, double lengthscale,
           double signal_scale);

/// Positive hyperparameters recovered from their unconstrained raws.
struct GPHyper {
  double lengthscale = 1.0;
  double signal_scale = 1.0;
  double noise_scale = 1.0;
  double signal2() const { return signal_scale * signal_scale; }
  double noise2() const { return noise_scale * noise_scale; }
};

/// Register "gp.raw_lengthscale", "gp.raw_signal", "gp.raw_noise" with
/// softplus-inverse raws for l = sqrt(latent_dim), sigma_s = 1, sigma_obs = 1.
void init_gp_params(ParameterStore& store, std::size_t latent_dim);
GPHyper gp_hyper_values(const ParameterStore& store);

/// Register "head.beta" (zeros) and "head.bias" for the linear AFT head.
void init_linear_head_params(ParameterStore& store, std::size_t latent_dim);

// ---- taped building blocks ----------------------------------------------

struct KernelVars {
  ad::Var lengthscale;  // rank-0, positive
  ad::Var signal2;      // rank-0, positive
};
KernelVars kernel_vars(ParamCtx& ctx);
ad::Var noise2_var(ParamCtx& ctx);   // sigma_obs^2
ad::Var noise_std_var(ParamCtx& ctx);  // sigma_obs

ad::Var rbf_gram(ad::Tape& t, ad::Var points, const KernelVars& k);
ad::Var rbf_cross(ad::Tape& t, ad::Var a, ad::Var b, const KernelVars& k);

/// Variational Cholesky factor rebuilt from "gp.variational_chol_raw":
/// strict lower part free, diagonal softplus-positive.
ad::Var variational_chol_var(ParamCtx& ctx);

ad::Var kl_divergence(ad::Tape& t, ad::Var chol_vv, ad::Var variational_mean,
                      ad::Var variational_chol);

/// A training batch split by event flag. Censored entries carry raw times.
struct ObjectiveBatch {
  ad::Var latents_observed;          // (n_obs x d); invalid when n_obs == 0
  ad::Tensor y_observed;             // log times, length n_obs
  ad::Var latents_censored;          // (n_cens x d); invalid when n_cens == 0
  ad::Tensor z_censored;             // raw times, length n_cens
  std::size_t observed() const { return y_observed.rank() ? y_observed.size() : 0; }
  std::size_t censored() const { return z_censored.rank() ? z_censored.size() : 0; }
};

/// Censoring-aware negative objective for any head. Observed samples
/// contribute the head's own log-density term, censored ones the log of the
/// predictive log-normal survival function. For sparse heads both sums are
/// scaled by n_total/|batch| and the KL term is added unscaled.
ad::Var censored_objective(ParamCtx& ctx, HeadKind kind, const ObjectiveBatch& batch,
                           std::size_t n_total,
                           SurvivalDenominator mode = SurvivalDenominator::VarianceSum,
                           const ad::JitterPolicy& policy = {});

/// Negative exact-GP log marginal likelihood over uncensored samples (Cholesky route).
ad::Var exact_gp_objective(ParamCtx& ctx, ad::Var latents, const ad::Tensor& y,
                           const ad::JitterPolicy& policy = {});

/// Negative SVGP evidence lower bound, minibatch-scaled by n_total/|batch|.
ad::Var svgp_objective(ParamCtx& ctx, ad::Var latents, const ad::Tensor& y, std::size_t n_total,
                       const ad::JitterPolicy& policy = {});

/// Negative parametric-predictive objective: Gaussian likelihood at the
/// predictive distribution (variance sigma_obs^2 + sigma_f^2), KL-regularized.
ad::Var ppgp_objective(ParamCtx& ctx, ad::Var latents, const ad::Tensor& y, std::size_t n_total,
                       const ad::JitterPolicy& policy = {});

/// Negative Gaussian log likelihood of the linear AFT head.
ad::Var linear_aft_objective(ParamCtx& ctx, ad::Var latents, const ad::Tensor& y);

// ---- plain-value prediction ----------------------------------------------

/// Exact-GP posterior: factors (K + sigma_obs^2 I) once, then predicts per input.
class ExactGPPredictor {
public:
  ExactGPPredictor(ad::Tensor train_latents, ad::Tensor train_y, GPHyper hyper,
                   const ad::JitterPolicy& policy = {});
  PredictiveDistribution predict(std::span<const double> latent) const;

private:
  ad::Tensor train_latents_;
  ad::Tensor chol_;
  ad::Tensor alpha_;
  GPHyper hyper_;
};

/// Sparse posterior from inducing state; factors K_vv once.
class SparsePredictor {
public:
  SparsePredictor(ad::Tensor inducing, ad::Tensor variational_mean, ad::Tensor variational_chol,
                  GPHyper hyper, const ad::JitterPolicy& policy = {});
  /// Build from store parameters ("gp.inducing", "gp.variational_mean", ...).
  static SparsePredictor from_store(const ParameterStore& store,
                                    const ad::JitterPolicy& policy = {});
  PredictiveDistribution predict(std::span<const double> latent) const;

private:
  ad::Tensor inducing_;
  ad::Tensor chol_vv_;
  ad::Tensor variational_chol_;
  ad::Tensor gamma_;  // K_vv^{-1} m
  GPHyper hyper_;
};

PredictiveDistribution exact_gp_predict(const ad::Tensor& train_latents,
                                        const ad::Tensor& train_y,
                                        std::span<const double> latent, const GPHyper& hyper,
                                        const ad::JitterPolicy& policy = {});

/// Eq.-style sparse predictive (mu_f, sigma_f^2) for one input.
std::pair<double, double> svgp_predict(std::span<const double> latent,
                                       const ad::Tensor& inducing,
                                       const ad::Tensor& variational_mean,
                                       const ad::Tensor& variational_chol, const GPHyper& hyper,
                                       const ad::JitterPolicy& policy = {});

PredictiveDistribution linear_head_predict(const ParameterStore& store,
                                           std::span<const double> latent);

/// KL(q(v) || p(v)) for q = N(m, L_S L_S^T) against N(0, K_vv); the caller
/// supplies K_vv already jittered/positive definite.
double kl_gaussian(const ad::Tensor& gram_vv, const ad::Tensor& variational_mean,
                   const ad::Tensor& variational_chol);

/// Survival function of the predictive log-normal at time z > 0. Default
/// denominator sqrt(sigma_f^2 + sigma_obs^2); the paper_literal variant uses
/// sigma_f + sigma_obs.
double lognormal_survival(double z, const PredictiveDistribution& pred,
                          bool paper_literal = false);

/// log of lognormal_survival, stable deep in the tail.
double log_lognormal_survival(double z, const PredictiveDistribution& pred,
                              bool paper_literal = false);

/// Initialize the inducing set from encoded sample records: inducing inputs
/// are the latents, variational mean zero, S = K_vv so the KL starts at zero.
/// Registers "gp.inducing", "gp.variational_mean", "gp.variational_chol_raw".
void init_inducing(ParameterStore& store, const EncoderConfig& cfg,
                   const std::vector<PatientRecord>& sample,
                   const ad::JitterPolicy& policy = {});

}  // namespace dkaft
