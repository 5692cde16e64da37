#include "dkaft/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "dkaft/errors.hpp"
#include "dkaft/math.hpp"

namespace dkaft {

using ad::Shape;
using ad::Tensor;
using ad::Var;
using nlohmann::json;

namespace {

constexpr double kLog2Pi = 1.8378770664093453;

using Predictor = std::function<PredictiveDistribution(std::span<const double>)>;

/// Encode selected records onto one tape and split them by event flag.
ObjectiveBatch build_batch(ParamCtx& ctx, const EncoderConfig& enc, const Dataset& data,
                           std::span<const std::size_t> indices) {
  std::vector<Var> obs, cens;
  std::vector<double> y_obs, z_cens;
  for (std::size_t i : indices) {
    const PatientRecord& rec = data.records[i];
    Var h = encode(ctx, enc, rec);
    if (rec.event == 1) {
      obs.push_back(h);
      y_obs.push_back(std::log(rec.time));
    } else {
      cens.push_back(h);
      z_cens.push_back(rec.time);
    }
  }
  ObjectiveBatch b;
  if (!obs.empty()) {
    const std::size_t n_obs = y_obs.size();
    b.latents_observed = ad::stack_rows(ctx.tape(), obs);
    b.y_observed = Tensor(Shape{n_obs}, std::move(y_obs));
  }
  if (!cens.empty()) {
    const std::size_t n_cens = z_cens.size();
    b.latents_censored = ad::stack_rows(ctx.tape(), cens);
    b.z_censored = Tensor(Shape{n_cens}, std::move(z_cens));
  }
  return b;
}

Tensor encode_observed(ParameterStore& store, const EncoderConfig& enc, const Dataset& data,
                       std::vector<double>* y_out) {
  std::vector<double> rows;
  std::size_t n = 0;
  for (const auto& rec : data.records) {
    if (rec.event != 1) continue;
    Tensor h = encode_value(store, enc, rec);
    rows.insert(rows.end(), h.vec().begin(), h.vec().end());
    if (y_out) y_out->push_back(std::log(rec.time));
    ++n;
  }
  if (n == 0) throw DataError("exact head: no observed samples in the training data");
  const std::size_t d = rows.size() / n;
  return Tensor(Shape{n, d}, std::move(rows));
}

Predictor make_predictor(HeadKind kind, ParameterStore& store, const EncoderConfig& enc,
                         const Dataset& train) {
  switch (kind) {
    case HeadKind::Exact: {
      std::vector<double> y;
      Tensor latents = encode_observed(store, enc, train, &y);
      const std::size_t n_y = y.size();
      auto p = std::make_shared<ExactGPPredictor>(std::move(latents),
                                                  Tensor(Shape{n_y}, std::move(y)),
                                                  gp_hyper_values(store));
      return [p](std::span<const double> h) { return p->predict(h); };
    }
    case HeadKind::Svgp:
    case HeadKind::Ppgp: {
      auto p = std::make_shared<SparsePredictor>(SparsePredictor::from_store(store));
      return [p](std::span<const double> h) { return p->predict(h); };
    }
    case HeadKind::Linear:
      return [&store](std::span<const double> h) { return linear_head_predict(store, h); };
  }
  throw ConfigError("unknown head kind");
}

double record_loglik(const PatientRecord& rec, const PredictiveDistribution& pred,
                     bool paper_literal) {
  if (rec.event == 1) {
    const double var = pred.total_variance();
    const double r = std::log(rec.time) - pred.mu;
    return -0.5 * (kLog2Pi + std::log(var)) - r * r / (2.0 * var);
  }
  return log_lognormal_survival(rec.time, pred, paper_literal);
}

double mean_loglik(const Dataset& data, ParameterStore& store, const EncoderConfig& enc,
                   const Predictor& predict, bool paper_literal) {
  if (data.size() == 0) throw DataError("validation set is empty");
  double acc = 0.0;
  for (const auto& rec : data.records) {
    Tensor h = encode_value(store, enc, rec);
    acc += record_loglik(rec, predict({h.data(), h.size()}), paper_literal);
  }
  return acc / static_cast<double>(data.size());
}

// Median pairwise latent distance over a sample of records; sets the RBF
// lengthscale so the kernel starts neither flat nor spiky.
void rescale_lengthscale_to_latents(ParameterStore& store, const EncoderConfig& enc,
                                    const Dataset& train, Rng& rng) {
  const std::size_t sample_n = std::min<std::size_t>(train.size(), 64);
  auto idx = rng.sample_without_replacement(train.size(), sample_n);
  std::vector<Tensor> latents;
  latents.reserve(sample_n);
  for (auto i : idx) latents.push_back(encode_value(store, enc, train.records[i]));
  std::vector<double> dist;
  for (std::size_t i = 0; i + 1 < latents.size(); ++i)
    for (std::size_t j = i + 1; j < latents.size(); ++j) {
      double d2 = 0.0;
      for (std::size_t k = 0; k < latents[i].size(); ++k) {
        const double d = latents[i][k] - latents[j][k];
        d2 += d * d;
      }
      dist.push_back(std::sqrt(d2));
    }
  if (dist.empty()) return;
  std::sort(dist.begin(), dist.end());
  const double median = dist[dist.size() / 2];
  if (median > 1e-8)
    store.value("gp.raw_lengthscale") = Tensor::scalar(mathx::softplus_inv(median));
}

}  // namespace

TrainResult train_model(const RunConfig& config, const Dataset& train_raw,
                        const Dataset& val_raw) {
  config.validate();
  if (train_raw.size() == 0 || val_raw.size() == 0)
    throw DataError("train_model: empty train or validation dataset");
  if (train_raw.n_static != val_raw.n_static || train_raw.n_sequential != val_raw.n_sequential)
    throw DataError("train_model: train and validation feature dimensions differ");
  const HeadKind kind = config.head_kind();
  if (kind == HeadKind::Exact && train_raw.size() > config.max_exact_n)
    throw ConfigError("exact head refused: n=" + std::to_string(train_raw.size()) +
                      " exceeds max_exact_n=" + std::to_string(config.max_exact_n) +
                      " (O(n^3) cost); use svgp or ppgp");

  Rng rng(config.seed);
  const StandardStats stats = compute_stats(train_raw);
  const Dataset train = standardize(train_raw, stats);
  const Dataset val = standardize(val_raw, stats);

  EncoderConfig enc;
  enc.n_sta = train.n_static;
  enc.n_seq = train.n_sequential;
  enc.n_sta_repr = config.n_sta_repr;
  enc.n_seq_emb = config.n_seq_emb;
  enc.n_seq_repr = config.n_seq_repr;
  enc.dropout_rate = config.dropout_rate;
  enc.validate();

  ParameterStore store;
  init_encoder_params(store, enc, rng);
  init_gp_params(store, enc.latent_dim());
  if (kind == HeadKind::Linear) init_linear_head_params(store, enc.latent_dim());

  TrainResult result;
  if (config.pretrain == "dml") {
    PretrainConfig pc;
    pc.bins = config.dml_bins;
    pc.margin = config.dml_margin;
    pc.batch_size = config.batch_size;
    pc.patience = config.dml_patience;
    pc.max_epochs = config.dml_max_epochs;
    pc.lr = config.lr;
    result.pretrain = pretrain(store, enc, train, val, pc, rng);
  }

  // Match the kernel lengthscale to the latent geometry the (possibly
  // pretrained) encoder actually produces; a fixed sqrt(d) init leaves the
  // kernel flat when the latents are small.
  rescale_lengthscale_to_latents(store, enc, train, rng);

  if (kind == HeadKind::Svgp || kind == HeadKind::Ppgp) {
    if (config.m_inducing > train.size())
      throw ConfigError("m_inducing=" + std::to_string(config.m_inducing) +
                        " exceeds training size " + std::to_string(train.size()));
    auto idx = rng.sample_without_replacement(train.size(), config.m_inducing);
    std::vector<PatientRecord> sample;
    sample.reserve(idx.size());
    for (auto i : idx) sample.push_back(train.records[i]);
    init_inducing(store, enc, sample);
  }

  const SurvivalDenominator mode = config.survival_mode();
  const bool paper_literal = mode == SurvivalDenominator::PaperLiteral;
  std::vector<std::size_t> order(train.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  double best_loglik = -std::numeric_limits<double>::infinity();
  auto best_values = store.snapshot_values();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    double loss_sum = 0.0;
    std::size_t batches = 0;
    if (kind == HeadKind::Exact) {
      ad::Tape tape;
      ParamCtx ctx(tape, store);
      ObjectiveBatch b = build_batch(ctx, enc, train, order);
      Var loss = censored_objective(ctx, kind, b, train.size(), mode);
      tape.backward(loss);
      adam_step(store, ctx.gradients(), config.lr);
      loss_sum = tape.value(loss).scalar_value();
      batches = 1;
    } else {
      rng.shuffle(order);
      for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
        const std::size_t stop = std::min(start + config.batch_size, order.size());
        ad::Tape tape;
        ParamCtx ctx(tape, store);
        ObjectiveBatch b =
            build_batch(ctx, enc, train, std::span(order).subspan(start, stop - start));
        Var loss = censored_objective(ctx, kind, b, train.size(), mode);
        tape.backward(loss);
        adam_step(store, ctx.gradients(), config.lr);
        loss_sum += tape.value(loss).scalar_value();
        ++batches;
      }
    }
    const double train_loss = loss_sum / static_cast<double>(batches);
    if (!std::isfinite(train_loss))
      throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));

    Predictor predict = make_predictor(kind, store, enc, train);
    const double val_loglik = mean_loglik(val, store, enc, predict, paper_literal);
    const auto t1 = std::chrono::steady_clock::now();
    result.log.push_back(EpochLog{
        epoch, train_loss, val_loglik,
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count()});
    if (val_loglik > best_loglik) {
      best_loglik = val_loglik;
      best_values = store.snapshot_values();
    }
  }
  store.restore_values(best_values);

  Checkpoint cp;
  cp.config = config;
  cp.n_static = train.n_static;
  cp.n_sequential = train.n_sequential;
  cp.stats = stats;
  cp.params = store.snapshot_values();
  if (kind == HeadKind::Exact) {
    std::vector<double> y;
    cp.exact_train_latents = encode_observed(store, enc, train, &y);
    const std::size_t n_y = y.size();
    cp.exact_train_y = Tensor(Shape{n_y}, std::move(y));
  }
  cp.rng_seed = config.seed;
  cp.rng_draws = rng.draws();
  result.checkpoint = std::move(cp);
  return result;
}

std::vector<PredictionRow> predict_dataset(const Checkpoint& cp, const Dataset& raw,
                                           const PredictOptions& opts) {
  if (raw.n_static != cp.n_static || raw.n_sequential != cp.n_sequential)
    throw DataError("predict: data dimensions (" + std::to_string(raw.n_static) + "," +
                    std::to_string(raw.n_sequential) + ") do not match checkpoint (" +
                    std::to_string(cp.n_static) + "," + std::to_string(cp.n_sequential) + ")");
  const Dataset data = standardize(raw, cp.stats);
  ParameterStore store = cp.make_store();
  const HeadKind kind = cp.config.head_kind();
  EncoderConfig enc = cp.encoder_config();

  std::vector<PredictionRow> rows;
  rows.reserve(data.size());
  if (opts.mc_dropout) {
    if (kind != HeadKind::Linear)
      throw ConfigError("mc-dropout prediction requires the linear head");
    if (opts.passes < 2) throw ConfigError("mc-dropout: passes must be at least 2");
    // the baseline's suggested rate when the checkpoint was trained without dropout
    if (enc.dropout_rate <= 0.0) enc.dropout_rate = 0.2;
    Rng rng(cp.rng_seed);
    for (const auto& rec : data.records) {
      PredictiveDistribution d = mc_dropout_predict(rec, store, enc, opts.passes, rng);
      rows.push_back(PredictionRow{rec.id, d.mu, d.sigma_f2, d.sigma_obs2, point_prediction(d)});
    }
    return rows;
  }

  Predictor predict;
  if (kind == HeadKind::Exact) {
    if (!cp.exact_train_latents || !cp.exact_train_y)
      throw DataError("predict: checkpoint lacks the exact-head training set");
    auto p = std::make_shared<ExactGPPredictor>(*cp.exact_train_latents, *cp.exact_train_y,
                                                gp_hyper_values(store));
    predict = [p](std::span<const double> h) { return p->predict(h); };
  } else if (kind == HeadKind::Svgp || kind == HeadKind::Ppgp) {
    auto p = std::make_shared<SparsePredictor>(SparsePredictor::from_store(store));
    predict = [p](std::span<const double> h) { return p->predict(h); };
  } else {
    predict = [&store](std::span<const double> h) { return linear_head_predict(store, h); };
  }
  for (const auto& rec : data.records) {
    Tensor h = encode_value(store, enc, rec);
    PredictiveDistribution d = predict({h.data(), h.size()});
    rows.push_back(PredictionRow{rec.id, d.mu, d.sigma_f2, d.sigma_obs2, point_prediction(d)});
  }
  return rows;
}

void save_predictions(const std::vector<PredictionRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write predictions: " + path);
  for (const auto& r : rows) {
    json j;
    j["id"] = r.id;
    j["mu"] = r.mu;
    j["sigma_f2"] = r.sigma_f2;
    j["sigma_obs2"] = r.sigma_obs2;
    j["z_hat"] = r.z_hat;
    out << j.dump() << "\n";
  }
}

std::vector<PredictionRow> load_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions: " + path);
  std::vector<PredictionRow> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      rows.push_back(PredictionRow{j.at("id").get<std::string>(), j.at("mu").get<double>(),
                                   j.at("sigma_f2").get<double>(),
                                   j.at("sigma_obs2").get<double>(), j.at("z_hat").get<double>()});
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad prediction row: " + e.what());
    }
  }
  if (rows.empty()) throw DataError("predictions file is empty: " + path);
  return rows;
}

EvalOutputs evaluate_predictions(const std::vector<PredictionRow>& rows, const Dataset& data,
                                 std::size_t quantiles) {
  std::map<std::string, const PatientRecord*> by_id;
  for (const auto& rec : data.records) by_id[rec.id] = &rec;
  std::vector<EvalPair> pairs;
  pairs.reserve(rows.size());
  std::vector<std::string> missing;
  for (const auto& r : rows) {
    auto it = by_id.find(r.id);
    if (it == by_id.end()) {
      missing.push_back(r.id);
      continue;
    }
    PredictiveDistribution pred{r.mu, r.sigma_f2, r.sigma_obs2};
    pairs.push_back(make_eval_pair(it->second->time, pred, it->second->event));
  }
  if (!missing.empty()) {
    std::ostringstream os;
    os << "evaluate: " << missing.size() << " prediction ids missing from the dataset:";
    for (std::size_t i = 0; i < std::min<std::size_t>(missing.size(), 10); ++i)
      os << " " << missing[i];
    throw DataError(os.str());
  }

  EvalOutputs out;
  out.report.mad = mad(pairs);
  out.report.rmse_log = rmse_log(pairs);
  out.report.c_index = c_index(pairs);
  double crps_sum = 0.0;
  for (const auto& p : pairs) crps_sum += crps_gaussian(p.y, p.y_hat, std::sqrt(p.sigma2));
  out.report.crps = crps_sum / static_cast<double>(pairs.size());
  out.ecdf = residual_ecdf_ks(pairs);
  out.report.ks = out.ecdf.ks;
  out.qp_mad = qp_curve(pairs, quantiles, QPMetric::Mad);
  out.qp_rmse = qp_curve(pairs, quantiles, QPMetric::RmseLog);
  return out;
}

double validation_loglik(const Checkpoint& cp, const Dataset& raw) {
  std::vector<PredictionRow> rows = predict_dataset(cp, raw);
  const bool literal = cp.config.survival_mode() == SurvivalDenominator::PaperLiteral;
  double acc = 0.0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    PredictiveDistribution pred{rows[i].mu, rows[i].sigma_f2, rows[i].sigma_obs2};
    acc += record_loglik(raw.records[i], pred, literal);
  }
  return acc / static_cast<double>(rows.size());
}

}  // namespace dkaft
