#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <numbers>

#include "dkaft/errors.hpp"
#include "dkaft/gp.hpp"
#include "dkaft/math.hpp"
#include "test_support.hpp"

using namespace dkaft;
using ad::Shape;
using ad::Tensor;
using ad::Var;

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  Eigen::MatrixXd m(t.rows(), t.cols());
  for (std::size_t i = 0; i < t.rows(); ++i)
    for (std::size_t j = 0; j < t.cols(); ++j) m(i, j) = t.at(i, j);
  return m;
}

Tensor gram_by_rbf(const Tensor& points, const GPHyper& hyper) {
  const std::size_t n = points.rows(), d = points.cols();
  Tensor k(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      k.at(i, j) = rbf({points.data() + i * d, d}, {points.data() + j * d, d}, hyper.lengthscale,
                       hyper.signal_scale);
  return k;
}

void set_raw(ParameterStore& store, const std::string& name, double positive_value) {
  store.value(name) = Tensor::scalar(mathx::softplus_inv(positive_value));
}

ParameterStore gp_store(std::size_t latent_dim, double ell, double sig, double noise) {
  ParameterStore store;
  init_gp_params(store, latent_dim);
  set_raw(store, "gp.raw_lengthscale", ell);
  set_raw(store, "gp.raw_signal", sig);
  set_raw(store, "gp.raw_noise", noise);
  return store;
}

// register inducing state with U given, m = 0, S = K_vv (prior start)
void set_variational_state(ParameterStore& store, const Tensor& inducing) {
  const std::size_t m = inducing.rows();
  ad::JitteredChol jc =
      ad::cholesky_with_jitter(gram_by_rbf(inducing, gp_hyper_values(store)), {});
  Tensor raw(Shape{m, m});
  for (std::size_t i = 0; i < m; ++i) {
    raw.at(i, i) = mathx::softplus_inv(jc.lower.at(i, i));
    for (std::size_t j = 0; j < i; ++j) raw.at(i, j) = jc.lower.at(i, j);
  }
  if (store.has("gp.inducing")) {
    store.value("gp.inducing") = inducing;
    store.value("gp.variational_mean") = Tensor(Shape{m});
    store.value("gp.variational_chol_raw") = raw;
  } else {
    store.add("gp.inducing", inducing);
    store.add("gp.variational_mean", Tensor(Shape{m}));
    store.add("gp.variational_chol_raw", raw);
  }
}

Tensor random_latents(std::size_t n, std::size_t d, Rng& rng, double scale = 1.0) {
  Tensor h(Shape{n, d});
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = scale * rng.normal();
  return h;
}

double objective_value(ParameterStore& store, HeadKind kind, const ObjectiveBatch&,
                       std::size_t) = delete;

double eval_objective(ParameterStore& store, HeadKind kind, const Tensor& latents,
                      const Tensor& y, std::size_t n_total,
                      SurvivalDenominator mode = SurvivalDenominator::VarianceSum) {
  ad::Tape t;
  ParamCtx ctx(t, store);
  ObjectiveBatch b;
  b.latents_observed = ad::constant(t, latents);
  b.y_observed = y;
  return t.value(censored_objective(ctx, kind, b, n_total, mode)).scalar_value();
}

}  // namespace

TEST_CASE("rbf kernel") {
  CHECK(rbf(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.0}, 0.7, 1.5) ==
        doctest::Approx(2.25).epsilon(1e-14));
  // |a-b|^2 = 2 with unit scales -> e^{-1}
  CHECK(rbf(std::vector<double>{1.0, 0.0}, std::vector<double>{0.0, 1.0}, 1.0, 1.0) ==
        doctest::Approx(0.36787944117144233).epsilon(1e-14));
  Rng rng(1);
  for (int i = 0; i < 20; ++i) {
    auto a = rng.normal_vec(4);
    auto b = rng.normal_vec(4);
    CHECK(rbf(a, b, 1.3, 0.8) == rbf(b, a, 1.3, 0.8));
    CHECK(rbf(a, b, 1.3, 0.8) > 0.0);
    CHECK(rbf(a, b, 1.3, 0.8) <= 0.64 + 1e-15);
  }
  CHECK_THROWS_AS(rbf(std::vector<double>{1.0}, std::vector<double>{1.0, 2.0}, 1.0, 1.0),
                  ShapeError);
}

TEST_CASE("gram matrices are symmetric PSD") {
  Rng rng(2);
  for (std::size_t n : {5, 40, 100}) {
    Tensor h = random_latents(n, 3, rng);
    GPHyper hyper{1.2, 0.9, 1.0};
    Tensor k = gram_by_rbf(h, hyper);
    Eigen::MatrixXd ke = to_eigen(k);
    CHECK((ke - ke.transpose()).cwiseAbs().maxCoeff() == 0.0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(ke);
    CHECK(es.eigenvalues().minCoeff() >= -1e-10);
    for (std::size_t i = 0; i < n; ++i)
      CHECK(k.at(i, i) == hyper.signal2());  // exact by construction
  }
}

TEST_CASE("exact GP objective closed-form singletons") {
  SUBCASE("y=0, unit kernel, vanishing noise") {
    ParameterStore store = gp_store(2, 1.0, 1.0, 1e-6);
    const double loss =
        eval_objective(store, HeadKind::Exact, Tensor(Shape{1, 2}), Tensor(Shape{1}), 1);
    CHECK(loss == doctest::Approx(0.9189385332046727).epsilon(1e-6));
  }
  SUBCASE("y=1, unit kernel, unit noise") {
    ParameterStore store = gp_store(2, 1.0, 1.0, 1.0);
    const double loss = eval_objective(store, HeadKind::Exact, Tensor(Shape{1, 2}),
                                       Tensor(Shape{1}, {1.0}), 1);
    CHECK(loss == doctest::Approx(1.5155121234846453).epsilon(1e-6));
  }
  SUBCASE("gradient of the objective matches finite differences") {
    Rng rng(3);
    ParameterStore store = gp_store(3, 1.1, 0.9, 0.8);
    store.add("H", random_latents(6, 3, rng));
    Tensor y(Shape{6});
    for (std::size_t i = 0; i < 6; ++i) y[i] = rng.normal();
    auto f = [y](ad::Tape& t, ParamCtx& ctx) { return exact_gp_objective(ctx, ctx("H"), y); };
    CHECK(grad_check(f, store, 1e-5) <= 1e-5);
  }
}

TEST_CASE("exact GP objective equals dense-inverse evaluation") {
  Rng rng(4);
  for (int rep = 0; rep < 5; ++rep) {
    const std::size_t n = 5 + rng.below(26);
    ParameterStore store = gp_store(3, 1.0 + rng.uniform01(), 0.5 + rng.uniform01(),
                                    0.3 + rng.uniform01());
    Tensor h = random_latents(n, 3, rng);
    Tensor y(Shape{n});
    for (std::size_t i = 0; i < n; ++i) y[i] = rng.normal();
    const double mine = eval_objective(store, HeadKind::Exact, h, y, n);

    // oracle: dense inverse and log-determinant with the same jitter policy
    const GPHyper hyper = gp_hyper_values(store);
    Tensor k = gram_by_rbf(h, hyper);
    double mean_diag = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean_diag += k.at(i, i) + hyper.noise2();
    mean_diag /= static_cast<double>(n);
    Eigen::MatrixXd ky = to_eigen(k);
    for (std::size_t i = 0; i < n; ++i) ky(i, i) += hyper.noise2() + 1e-8 * mean_diag;
    Eigen::VectorXd ye(n);
    for (std::size_t i = 0; i < n; ++i) ye(i) = y[i];
    Eigen::MatrixXd inv = ky.fullPivLu().inverse();
    const double quad = ye.dot(inv * ye);
    const double logdet = std::log(ky.fullPivLu().determinant());
    const double oracle = 0.5 * quad + 0.5 * logdet +
                          0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
    CHECK(std::fabs(mine - oracle) <= 1e-10);
  }
}

TEST_CASE("exact GP prediction") {
  SUBCASE("training input recovered under vanishing noise") {
    Rng rng(5);
    ParameterStore store = gp_store(1, 1.0, 1.0, 1e-5);  // sigma_obs^2 = 1e-10
    Tensor h(Shape{5, 1}, {-6.0, -3.0, 0.0, 3.0, 6.0});
    Tensor y(Shape{5});
    for (std::size_t i = 0; i < 5; ++i) y[i] = rng.normal();
    GPHyper hyper = gp_hyper_values(store);
    for (std::size_t i = 0; i < 5; ++i) {
      PredictiveDistribution p = exact_gp_predict(h, y, {h.data() + i, 1}, hyper);
      CHECK(std::fabs(p.mu - y[i]) <= 1e-4);
      CHECK(p.sigma_f2 <= 1e-4);
    }
  }
  SUBCASE("far from the data the prior is recovered") {
    ParameterStore store = gp_store(1, 1.0, 1.3, 0.5);
    Tensor h(Shape{2, 1}, {0.0, 1.0});
    Tensor y(Shape{2}, {1.0, -1.0});
    GPHyper hyper = gp_hyper_values(store);
    const double far = 40.0;
    PredictiveDistribution p = exact_gp_predict(h, y, {&far, 1}, hyper);
    CHECK(std::fabs(p.mu) <= 1e-12);
    CHECK(p.sigma_f2 == doctest::Approx(hyper.signal2()).epsilon(1e-10));
  }
  SUBCASE("scalar case with unit kernel and unit noise") {
    ParameterStore store = gp_store(1, 1.0, 1.0, 1.0);
    Tensor h(Shape{1, 1}, {0.3});
    Tensor y(Shape{1}, {2.0});
    GPHyper hyper = gp_hyper_values(store);
    const double at = 0.3;
    PredictiveDistribution p = exact_gp_predict(h, y, {&at, 1}, hyper);
    CHECK(p.mu == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(p.sigma_f2 == doctest::Approx(0.5).epsilon(1e-6));
    CHECK(p.total_variance() == p.sigma_f2 + p.sigma_obs2);  // exact decomposition
  }
}

TEST_CASE("kl_gaussian") {
  SUBCASE("prior-matching state gives exactly zero") {
    Rng rng(6);
    Tensor u = random_latents(4, 2, rng);
    Tensor gram = gram_by_rbf(u, GPHyper{1.0, 1.0, 1.0});
    for (std::size_t i = 0; i < 4; ++i) gram.at(i, i) += 1e-8;
    Tensor chol = ad::plain_cholesky(gram).lower;
    CHECK(kl_gaussian(gram, Tensor(Shape{4}), chol) == 0.0);
  }
  SUBCASE("hand-computed scalar case") {
    CHECK(kl_gaussian(Tensor(Shape{1, 1}, {1.0}), Tensor(Shape{1}, {1.0}),
                      Tensor(Shape{1, 1}, {1.0})) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("non-negative on random valid states") {
    Rng rng(7);
    for (int rep = 0; rep < 100; ++rep) {
      const std::size_t m = 1 + rng.below(6);
      Tensor a = random_latents(m, m, rng);
      Tensor gram = ad::t_matmul(a, ad::t_transpose(a));
      for (std::size_t i = 0; i < m; ++i) gram.at(i, i) += 0.5 + static_cast<double>(m);
      Tensor b = random_latents(m, m, rng, 0.6);
      Tensor s_chol(Shape{m, m});
      for (std::size_t i = 0; i < m; ++i) {
        s_chol.at(i, i) = 0.2 + std::fabs(b.at(i, i));
        for (std::size_t j = 0; j < i; ++j) s_chol.at(i, j) = b.at(i, j);
      }
      Tensor mv(Shape{m});
      for (std::size_t i = 0; i < m; ++i) mv[i] = rng.normal();
      CHECK(kl_gaussian(gram, mv, s_chol) >= -1e-10);
    }
  }
  SUBCASE("factorization failure raises a numeric error") {
    CHECK_THROWS_AS(kl_gaussian(Tensor::row_major(2, 2, {1.0, 2.0, 2.0, 1.0}), Tensor(Shape{2}),
                                Tensor::eye(2)),
                    NumericError);
  }
}

TEST_CASE("sparse predictive distribution") {
  SUBCASE("prior variational state reproduces the prior") {
    Rng rng(8);
    ParameterStore store = gp_store(2, 1.0, 1.1, 0.7);
    Tensor u = random_latents(5, 2, rng);
    set_variational_state(store, u);
    SparsePredictor p = SparsePredictor::from_store(store);
    GPHyper hyper = gp_hyper_values(store);
    for (int rep = 0; rep < 5; ++rep) {
      auto h = rng.normal_vec(2);
      PredictiveDistribution d = p.predict(h);
      CHECK(std::fabs(d.mu) <= 1e-9);
      CHECK(d.sigma_f2 == doctest::Approx(hyper.signal2()).epsilon(1e-6));
    }
  }
  SUBCASE("single inducing point at the query") {
    ParameterStore store = gp_store(2, 1.0, 1.0, 1.0);
    Tensor u(Shape{1, 2}, {0.4, -0.2});
    set_variational_state(store, u);
    store.value("gp.variational_mean")[0] = 0.7;
    store.value("gp.variational_chol_raw").at(0, 0) = mathx::softplus_inv(std::sqrt(0.3));
    auto [mu, fvar] = svgp_predict(
        std::vector<double>{0.4, -0.2}, store.value("gp.inducing"),
        store.value("gp.variational_mean"),
        Tensor(Shape{1, 1}, {std::sqrt(0.3)}), gp_hyper_values(store));
    CHECK(mu == doctest::Approx(0.7).epsilon(1e-6));
    CHECK(fvar == doctest::Approx(0.3).epsilon(1e-4));
  }
  SUBCASE("variance bounded by prior plus the variational inflation") {
    Rng rng(9);
    ParameterStore store = gp_store(2, 0.9, 1.2, 0.5);
    Tensor u = random_latents(6, 2, rng);
    set_variational_state(store, u);
    // make S a generic SPD matrix
    Tensor& raw = store.value("gp.variational_chol_raw");
    for (std::size_t i = 0; i < 6; ++i)
      for (std::size_t j = 0; j <= i; ++j)
        raw.at(i, j) = (i == j) ? mathx::softplus_inv(0.3 + rng.uniform01()) : 0.4 * rng.normal();
    SparsePredictor p = SparsePredictor::from_store(store);
    GPHyper hyper = gp_hyper_values(store);

    Tensor s_chol(Shape{6, 6});
    for (std::size_t i = 0; i < 6; ++i) {
      s_chol.at(i, i) = mathx::softplus(raw.at(i, i));
      for (std::size_t j = 0; j < i; ++j) s_chol.at(i, j) = raw.at(i, j);
    }
    Tensor gram = gram_by_rbf(u, hyper);
    double mean_diag = 0.0;
    for (std::size_t i = 0; i < 6; ++i) mean_diag += gram.at(i, i);
    for (std::size_t i = 0; i < 6; ++i) gram.at(i, i) += 1e-8 * mean_diag / 6.0;
    Eigen::MatrixXd kinv = to_eigen(gram).fullPivLu().inverse();
    Eigen::MatrixXd s = to_eigen(s_chol) * to_eigen(s_chol).transpose();
    for (int rep = 0; rep < 10; ++rep) {
      auto h = rng.normal_vec(2);
      PredictiveDistribution d = p.predict(h);
      Eigen::VectorXd k(6);
      for (std::size_t i = 0; i < 6; ++i)
        k(i) = rbf({u.data() + i * 2, 2}, h, hyper.lengthscale, hyper.signal_scale);
      const double inflation = (kinv * k).dot(s * (kinv * k));
      CHECK(d.sigma_f2 >= 0.0);
      CHECK(d.sigma_f2 <= hyper.signal2() + inflation + 1e-8);
    }
  }
}

TEST_CASE("sparse objectives") {
  SUBCASE("single point at the prior reproduces hand arithmetic") {
    ParameterStore store = gp_store(2, 1.0, 1.0, 1.0);
    Tensor u(Shape{1, 2}, {0.1, 0.2});
    set_variational_state(store, u);
    Tensor h = u;  // batch = the inducing input itself
    const double svgp = eval_objective(store, HeadKind::Svgp, h, Tensor(Shape{1}), 1);
    CHECK(svgp == doctest::Approx(1.4189385332046727).epsilon(1e-6));
    const double ppgp = eval_objective(store, HeadKind::Ppgp, h, Tensor(Shape{1}), 1);
    CHECK(ppgp == doctest::Approx(1.2655121234846454).epsilon(1e-6));
  }
  SUBCASE("vanishing S makes PPGP and SVGP coincide") {
    ParameterStore store = gp_store(2, 1.0, 1.0, 1.0);
    Tensor u(Shape{1, 2}, {0.1, 0.2});
    set_variational_state(store, u);
    store.value("gp.variational_chol_raw").at(0, 0) = -30.0;  // S ~ 1e-26
    const double svgp = eval_objective(store, HeadKind::Svgp, u, Tensor(Shape{1}, {0.4}), 1);
    const double ppgp = eval_objective(store, HeadKind::Ppgp, u, Tensor(Shape{1}, {0.4}), 1);
    CHECK(std::fabs(svgp - ppgp) <= 1e-6);
  }
  SUBCASE("full batch uses scale factor one") {
    Rng rng(10);
    ParameterStore store = gp_store(2, 1.0, 1.0, 0.8);
    Tensor u = random_latents(3, 2, rng);
    set_variational_state(store, u);
    Tensor h = random_latents(4, 2, rng);
    Tensor y(Shape{4});
    for (std::size_t i = 0; i < 4; ++i) y[i] = rng.normal();
    const double full = eval_objective(store, HeadKind::Svgp, h, y, 4);
    const double doubled = eval_objective(store, HeadKind::Svgp, h, y, 8);
    // with n_total = 2|batch| the likelihood part doubles while KL stays put
    ad::Tape t;
    ParamCtx ctx(t, store);
    Var kl = kl_divergence(t, ad::cholesky(t, rbf_gram(t, ctx("gp.inducing"), kernel_vars(ctx))).lower,
                           ctx("gp.variational_mean"), variational_chol_var(ctx));
    const double klv = t.value(kl).scalar_value();
    CHECK(doubled - klv == doctest::Approx(2.0 * (full - klv)).epsilon(1e-10));
  }
  SUBCASE("gradients of both sparse objectives match finite differences") {
    Rng rng(11);
    ParameterStore store = gp_store(2, 1.0, 0.9, 0.7);
    Tensor u = random_latents(3, 2, rng);
    set_variational_state(store, u);
    store.add("H", random_latents(5, 2, rng));
    Tensor y(Shape{5});
    for (std::size_t i = 0; i < 5; ++i) y[i] = rng.normal();
    for (std::size_t i = 0; i < 3; ++i)
      store.value("gp.variational_mean")[i] = 0.3 * rng.normal();

    auto f_svgp = [y](ad::Tape& t, ParamCtx& ctx) {
      return svgp_objective(ctx, ctx("H"), y, 20);
    };
    CHECK(grad_check(f_svgp, store, 1e-5) <= 1e-4);
    auto f_ppgp = [y](ad::Tape& t, ParamCtx& ctx) {
      return ppgp_objective(ctx, ctx("H"), y, 20);
    };
    CHECK(grad_check(f_ppgp, store, 1e-5) <= 1e-4);
  }
}

TEST_CASE("ELBO is bounded by the exact log marginal likelihood") {
  // 1-D regression, inducing inputs fixed at the data, hyperparameters
  // shared and frozen; only the variational state is trained.
  Rng rng(12);
  const std::size_t n = 12;
  ParameterStore store = gp_store(1, 1.0, 1.0, 0.5);
  store.set_trainable("gp.raw_lengthscale", false);
  store.set_trainable("gp.raw_signal", false);
  store.set_trainable("gp.raw_noise", false);
  Tensor h(Shape{n, 1});
  Tensor y(Shape{n});
  for (std::size_t i = 0; i < n; ++i) {
    h[i] = -3.0 + 6.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    y[i] = std::sin(h[i]) + 0.5 * rng.normal();
  }
  set_variational_state(store, h);

  for (int step = 0; step < 1500; ++step) {
    ad::Tape t;
    ParamCtx ctx(t, store);
    Var loss = svgp_objective(ctx, ad::constant(t, h), y, n);
    t.backward(loss);
    adam_step(store, ctx.gradients(), 0.05);
  }
  const double elbo = -eval_objective(store, HeadKind::Svgp, h, y, n);
  const double lml = -eval_objective(store, HeadKind::Exact, h, y, n);
  CHECK(elbo <= lml + 1e-6);

  // predictive means close to the exact posterior after optimization
  SparsePredictor sp = SparsePredictor::from_store(store);
  GPHyper hyper = gp_hyper_values(store);
  double rmse = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double at = h[i];
    const double diff = sp.predict({&at, 1}).mu - exact_gp_predict(h, y, {&at, 1}, hyper).mu;
    rmse += diff * diff;
  }
  rmse = std::sqrt(rmse / static_cast<double>(n));
  CHECK(rmse <= 5e-2);
}

TEST_CASE("lognormal survival") {
  PredictiveDistribution pred{0.0, 0.0, 1.0};
  CHECK(lognormal_survival(1.0, pred) == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(lognormal_survival(1e-12, pred) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(lognormal_survival(std::exp(1.0), pred) ==
        doctest::Approx(0.15865525393145707).epsilon(1e-12));
  CHECK_THROWS_AS(lognormal_survival(0.0, pred), DomainError);
  CHECK_THROWS_AS(lognormal_survival(-1.0, pred), DomainError);

  // paper-literal denominator differs once sigma_f2 > 0
  PredictiveDistribution both{0.0, 0.25, 1.0};
  const double vs = lognormal_survival(std::exp(1.0), both, false);
  const double lit = lognormal_survival(std::exp(1.0), both, true);
  CHECK(vs == doctest::Approx(1.0 - mathx::normal_cdf(1.0 / std::sqrt(1.25))).epsilon(1e-12));
  CHECK(lit == doctest::Approx(1.0 - mathx::normal_cdf(1.0 / 1.5)).epsilon(1e-12));
  CHECK(vs != lit);
}

TEST_CASE("censored objective") {
  SUBCASE("all observed is bitwise-equal to the head objective") {
    Rng rng(13);
    for (HeadKind kind : {HeadKind::Exact, HeadKind::Svgp, HeadKind::Ppgp, HeadKind::Linear}) {
      ParameterStore store = gp_store(2, 1.0, 1.0, 0.9);
      init_linear_head_params(store, 2);
      Tensor u = random_latents(3, 2, rng);
      set_variational_state(store, u);
      Tensor h = random_latents(5, 2, rng);
      Tensor y(Shape{5});
      for (std::size_t i = 0; i < 5; ++i) y[i] = rng.normal();

      ad::Tape t1;
      ParamCtx c1(t1, store);
      ObjectiveBatch b;
      b.latents_observed = ad::constant(t1, h);
      b.y_observed = y;
      const double through_censored =
          t1.value(censored_objective(c1, kind, b, 5)).scalar_value();

      ad::Tape t2;
      ParamCtx c2(t2, store);
      Var hv = ad::constant(t2, h);
      Var direct;
      switch (kind) {
        case HeadKind::Exact: direct = exact_gp_objective(c2, hv, y); break;
        case HeadKind::Svgp: direct = svgp_objective(c2, hv, y, 5); break;
        case HeadKind::Ppgp: direct = ppgp_objective(c2, hv, y, 5); break;
        case HeadKind::Linear: direct = linear_aft_objective(c2, hv, y); break;
      }
      CHECK(through_censored == t2.value(direct).scalar_value());
    }
  }
  SUBCASE("a sample censored at its predictive median contributes log 2") {
    ParameterStore store = gp_store(2, 1.0, 1.0, 0.8);
    init_linear_head_params(store, 2);
    store.value("head.bias") = Tensor::scalar(1.7);
    Rng rng(14);
    Tensor h_obs = random_latents(4, 2, rng);
    Tensor y(Shape{4});
    for (std::size_t i = 0; i < 4; ++i) y[i] = rng.normal();

    ad::Tape t1;
    ParamCtx c1(t1, store);
    ObjectiveBatch plain;
    plain.latents_observed = ad::constant(t1, h_obs);
    plain.y_observed = y;
    const double base = t1.value(censored_objective(c1, HeadKind::Linear, plain, 5)).scalar_value();

    ad::Tape t2;
    ParamCtx c2(t2, store);
    ObjectiveBatch with_cens = plain;
    with_cens.latents_observed = ad::constant(t2, h_obs);
    with_cens.latents_censored = ad::constant(t2, Tensor(Shape{1, 2}));  // beta = 0 -> mu = bias
    with_cens.z_censored = Tensor(Shape{1}, {std::exp(1.7)});
    const double with_c =
        t2.value(censored_objective(c2, HeadKind::Linear, with_cens, 5)).scalar_value();
    CHECK(with_c - base == doctest::Approx(0.6931471805599453).epsilon(1e-9));
  }
  SUBCASE("censored term equals the quadrature-integrated upper tail") {
    Rng rng(15);
    for (int rep = 0; rep < 6; ++rep) {
      PredictiveDistribution pred;
      pred.mu = rng.normal();
      pred.sigma_f2 = 0.3 * rng.uniform01();
      pred.sigma_obs2 = 0.3 + rng.uniform01();
      const double s = std::sqrt(pred.total_variance());
      const double z = std::exp(pred.mu + (2.0 * rng.uniform01() - 1.0) * 2.0 * s);
      const double mine = log_lognormal_survival(z, pred);
      auto normal_density = [&](double yv) {
        const double r = (yv - pred.mu) / s;
        return std::exp(-0.5 * r * r) / (s * std::sqrt(2.0 * std::numbers::pi));
      };
      const double tail =
          testsup::integrate(normal_density, std::log(z), pred.mu + 40.0 * s, 1e-14);
      CHECK(testsup::rel_err(mine, std::log(tail)) <= 1e-6);
    }
  }
  SUBCASE("gradient of the censored sparse objective matches finite differences") {
    Rng rng(16);
    ParameterStore store = gp_store(2, 1.0, 0.9, 0.8);
    Tensor u = random_latents(3, 2, rng);
    set_variational_state(store, u);
    store.add("H_obs", random_latents(4, 2, rng));
    store.add("H_cens", random_latents(2, 2, rng));
    Tensor y(Shape{4});
    for (std::size_t i = 0; i < 4; ++i) y[i] = rng.normal();
    Tensor z(Shape{2}, {2.0, 5.0});
    auto f = [y, z](ad::Tape& t, ParamCtx& ctx) {
      ObjectiveBatch b;
      b.latents_observed = ctx("H_obs");
      b.y_observed = y;
      b.latents_censored = ctx("H_cens");
      b.z_censored = z;
      return censored_objective(ctx, HeadKind::Ppgp, b, 12);
    };
    CHECK(grad_check(f, store, 1e-5) <= 1e-4);
  }
}

TEST_CASE("linear AFT head") {
  SUBCASE("null model at the sample moments costs the Gaussian constant") {
    Rng rng(17);
    const std::size_t n = 20;
    Tensor h = random_latents(n, 3, rng);
    Tensor y(Shape{n});
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = 2.0 * rng.normal() + 1.0;
      mean += y[i];
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (y[i] - mean) * (y[i] - mean);
    var /= static_cast<double>(n);  // population variance

    ParameterStore store = gp_store(3, 1.0, 1.0, std::sqrt(var));
    init_linear_head_params(store, 3);
    store.value("head.bias") = Tensor::scalar(mean);
    const double loss = eval_objective(store, HeadKind::Linear, h, y, n);
    const double expect =
        static_cast<double>(n) * (0.5 * std::log(2.0 * std::numbers::pi * var) + 0.5);
    CHECK(loss == doctest::Approx(expect).epsilon(1e-10));
  }
  SUBCASE("perfect fit with unit noise costs half log two pi per sample") {
    ParameterStore store = gp_store(2, 1.0, 1.0, 1.0);
    init_linear_head_params(store, 2);
    store.value("head.bias") = Tensor::scalar(0.42);
    Tensor h(Shape{1, 2});
    Tensor y(Shape{1}, {0.42});
    const double loss = eval_objective(store, HeadKind::Linear, h, y, 1);
    CHECK(loss == doctest::Approx(0.9189385332046727).epsilon(1e-12));
  }
  SUBCASE("gradient check") {
    Rng rng(18);
    ParameterStore store = gp_store(3, 1.0, 1.0, 0.7);
    init_linear_head_params(store, 3);
    store.add("H", random_latents(6, 3, rng));
    Tensor y(Shape{6});
    for (std::size_t i = 0; i < 6; ++i) y[i] = rng.normal();
    auto f = [y](ad::Tape& t, ParamCtx& ctx) { return linear_aft_objective(ctx, ctx("H"), y); };
    CHECK(grad_check(f, store, 1e-5) <= 1e-5);
  }
}

TEST_CASE("init_inducing") {
  EncoderConfig cfg;
  cfg.n_sta = 3;
  cfg.n_seq = 2;
  cfg.n_sta_repr = 2;
  cfg.n_seq_emb = 3;
  cfg.n_seq_repr = 3;
  Rng rng(19);
  Rng data_rng(20);

  SUBCASE("single record becomes the single inducing row") {
    ParameterStore store;
    init_encoder_params(store, cfg, rng);
    init_gp_params(store, cfg.latent_dim());
    PatientRecord rec = testsup::random_record(cfg.n_sta, cfg.n_seq, 3, data_rng);
    init_inducing(store, cfg, {rec});
    Tensor h = encode_value(store, cfg, rec);
    const Tensor& u = store.value("gp.inducing");
    CHECK(u.rows() == 1);
    for (std::size_t j = 0; j < h.size(); ++j) CHECK(u.at(0, j) == h[j]);
  }
  SUBCASE("initial KL vanishes and the sample is deterministic") {
    ParameterStore store;
    init_encoder_params(store, cfg, rng);
    init_gp_params(store, cfg.latent_dim());
    std::vector<PatientRecord> sample;
    for (int i = 0; i < 4; ++i)
      sample.push_back(testsup::random_record(cfg.n_sta, cfg.n_seq, 2 + i, data_rng));
    init_inducing(store, cfg, sample);

    ad::Tape t;
    ParamCtx ctx(t, store);
    ad::CholVar c = ad::cholesky(t, rbf_gram(t, ctx("gp.inducing"), kernel_vars(ctx)));
    Var kl = kl_divergence(t, c.lower, ctx("gp.variational_mean"), variational_chol_var(ctx));
    CHECK(std::fabs(t.value(kl).scalar_value()) <= 1e-10);

    ParameterStore store2;
    Rng rng2(19);
    init_encoder_params(store2, cfg, rng2);
    init_gp_params(store2, cfg.latent_dim());
    init_inducing(store2, cfg, sample);
    const Tensor& u1 = store.value("gp.inducing");
    const Tensor& u2 = store2.value("gp.inducing");
    for (std::size_t i = 0; i < u1.size(); ++i) CHECK(u1[i] == u2[i]);
  }
  SUBCASE("empty sample rejected") {
    ParameterStore store;
    init_encoder_params(store, cfg, rng);
    init_gp_params(store, cfg.latent_dim());
    CHECK_THROWS_AS(init_inducing(store, cfg, {}), ConfigError);
  }
}
