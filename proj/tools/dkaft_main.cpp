// Command-line front end: synthetic data generation, DML pretraining,
// end-to-end training, prediction and evaluation.
//
// Exit codes: 0 success, 1 usage/config error, 2 data validation error,
// 3 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "dkaft/checkpoint.hpp"
#include "dkaft/data.hpp"
#include "dkaft/errors.hpp"
#include "dkaft/train.hpp"

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ConfigCli {
  std::string config_path;
  std::optional<std::string> head, pretrain, survival;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_sta_repr, n_seq_emb, n_seq_repr, m_inducing, epochs, batch_size,
      dml_bins, dml_patience, dml_max_epochs, max_exact_n;
  std::optional<double> lr, dropout_rate, dml_margin;
  bool paper_literal = false;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "key=value configuration file");
    cmd->add_option("--head", head, "output head: exact|svgp|ppgp|linear");
    cmd->add_option("--pretrain", pretrain, "pretraining: none|dml");
    cmd->add_option("--seed", seed, "random seed");
    cmd->add_option("--n-sta-repr", n_sta_repr, "static latent dim");
    cmd->add_option("--n-seq-emb", n_seq_emb, "sequence embedding dim");
    cmd->add_option("--n-seq-repr", n_seq_repr, "GRU hidden dim");
    cmd->add_option("--m-inducing", m_inducing, "inducing point count");
    cmd->add_option("--lr", lr, "learning rate");
    cmd->add_option("--epochs", epochs, "training epochs");
    cmd->add_option("--batch-size", batch_size, "minibatch size");
    cmd->add_option("--dropout-rate", dropout_rate, "encoder dropout rate");
    cmd->add_option("--dml-bins", dml_bins, "histogram bins for DML pseudo-classes");
    cmd->add_option("--dml-margin", dml_margin, "triplet margin");
    cmd->add_option("--dml-patience", dml_patience, "DML early-stopping patience");
    cmd->add_option("--dml-max-epochs", dml_max_epochs, "DML epoch cap");
    cmd->add_option("--max-exact-n", max_exact_n, "exact-head size guard");
    cmd->add_option("--survival-denominator", survival, "variance_sum|paper_literal");
    cmd->add_flag("--paper-literal-survival", paper_literal,
                  "use the sigma_f + sigma_obs survival denominator");
  }

  dkaft::RunConfig resolve() const {
    dkaft::RunConfig cfg;
    if (!config_path.empty()) cfg = dkaft::load_config_file(config_path);
    if (head) cfg.head = *head;
    if (pretrain) cfg.pretrain = *pretrain;
    if (seed) cfg.seed = *seed;
    if (n_sta_repr) cfg.n_sta_repr = *n_sta_repr;
    if (n_seq_emb) cfg.n_seq_emb = *n_seq_emb;
    if (n_seq_repr) cfg.n_seq_repr = *n_seq_repr;
    if (m_inducing) cfg.m_inducing = *m_inducing;
    if (lr) cfg.lr = *lr;
    if (epochs) cfg.epochs = *epochs;
    if (batch_size) cfg.batch_size = *batch_size;
    if (dropout_rate) cfg.dropout_rate = *dropout_rate;
    if (dml_bins) cfg.dml_bins = *dml_bins;
    if (dml_margin) cfg.dml_margin = *dml_margin;
    if (dml_patience) cfg.dml_patience = *dml_patience;
    if (dml_max_epochs) cfg.dml_max_epochs = *dml_max_epochs;
    if (max_exact_n) cfg.max_exact_n = *max_exact_n;
    if (survival) cfg.survival_denominator = *survival;
    if (paper_literal) cfg.survival_denominator = "paper_literal";
    cfg.validate();
    return cfg;
  }
};

void write_training_log(const std::vector<dkaft::EpochLog>& log, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw dkaft::DataError("cannot write training log: " + path);
  out << "epoch,train_loss,val_loglik,wall_ms\n";
  for (const auto& e : log)
    out << e.epoch << "," << fmt17(e.train_loss) << "," << fmt17(e.val_loglik) << "," << e.wall_ms
        << "\n";
}

void write_pretrain_history(const dkaft::PretrainResult& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw dkaft::DataError("cannot write pretrain history: " + path);
  out << "epoch,train_loss,val_map_at_r\n";
  for (const auto& e : r.history)
    out << e.epoch << "," << fmt17(e.train_loss) << "," << fmt17(e.val_map_at_r) << "\n";
}

int run(int argc, char** argv) {
  CLI::App app{"Deep kernel accelerated failure time models"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  dkaft::SynthSpec spec;
  std::string synth_out;
  std::string noise_mode = "homoscedastic";
  synth->add_option("--out", synth_out, "output JSONL path")->required();
  synth->add_option("--n", spec.n, "number of records");
  synth->add_option("--n-sta", spec.n_static, "static feature count");
  synth->add_option("--n-seq", spec.n_sequential, "sequential feature count");
  synth->add_option("--t-min", spec.t_min, "min sequence length");
  synth->add_option("--t-max", spec.t_max, "max sequence length");
  synth->add_option("--noise", noise_mode, "homoscedastic|heteroscedastic");
  synth->add_option("--sigma", spec.sigma, "homoscedastic noise level");
  synth->add_option("--censor-frac", spec.censor_frac, "fraction right-censored");
  synth->add_option("--seed", spec.seed, "random seed");

  // pretrain
  auto* pre = app.add_subcommand("pretrain", "DML-pretrain the encoder only");
  ConfigCli pre_cfg;
  std::string pre_train_path, pre_val_path, pre_out;
  pre_cfg.attach(pre);
  pre->add_option("--train", pre_train_path, "training JSONL")->required();
  pre->add_option("--val", pre_val_path, "validation JSONL")->required();
  pre->add_option("--out", pre_out, "output prefix (writes <out>.checkpoint.json, <out>.map_at_r.csv)")
      ->required();

  // train
  auto* train = app.add_subcommand("train", "train a model end to end");
  ConfigCli train_cfg;
  std::string train_path, val_path, train_out;
  train_cfg.attach(train);
  train->add_option("--train", train_path, "training JSONL")->required();
  train->add_option("--val", val_path, "validation JSONL")->required();
  train->add_option("--out", train_out,
                    "output prefix (writes <out>.checkpoint.json, <out>.log.csv)")
      ->required();

  // predict
  auto* predict = app.add_subcommand("predict", "predict with a checkpoint");
  std::string cp_path, pred_data_path, pred_out;
  dkaft::PredictOptions popts;
  predict->add_option("--checkpoint", cp_path, "checkpoint JSON")->required();
  predict->add_option("--data", pred_data_path, "input JSONL")->required();
  predict->add_option("--out", pred_out, "output predictions JSONL")->required();
  predict->add_flag("--mc-dropout", popts.mc_dropout, "MC-dropout predictive (linear head)");
  predict->add_option("--passes", popts.passes, "stochastic passes for --mc-dropout");

  // evaluate
  auto* eval = app.add_subcommand("evaluate", "evaluate predictions against data");
  std::string eval_pred_path, eval_data_path, eval_out = "eval";
  std::size_t quantiles = 10;
  eval->add_option("--pred", eval_pred_path, "predictions JSONL")->required();
  eval->add_option("--data", eval_data_path, "ground-truth JSONL")->required();
  eval->add_option("--quantiles", quantiles, "QP curve quantile count");
  eval->add_option("--out", eval_out,
                   "output prefix (writes <out>.report.json, <out>.qp.csv, <out>.ecdf.csv)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // usage errors map to exit code 1
  }

  if (synth->parsed()) {
    if (noise_mode == "heteroscedastic")
      spec.noise = dkaft::NoiseMode::Heteroscedastic;
    else if (noise_mode != "homoscedastic")
      throw dkaft::ConfigError("synth: unknown noise mode '" + noise_mode + "'");
    dkaft::Dataset ds = dkaft::synth_generate(spec);
    dkaft::save_jsonl(ds, synth_out);
    std::cout << "wrote " << ds.size() << " records to " << synth_out << "\n";
    return 0;
  }

  if (pre->parsed()) {
    dkaft::RunConfig cfg = pre_cfg.resolve();
    dkaft::Dataset train_raw = dkaft::load_jsonl(pre_train_path);
    dkaft::Dataset val_raw = dkaft::load_jsonl(pre_val_path);
    if (train_raw.n_static != val_raw.n_static ||
        train_raw.n_sequential != val_raw.n_sequential)
      throw dkaft::DataError("pretrain: train and validation dimensions differ");
    dkaft::Rng rng(cfg.seed);
    const dkaft::StandardStats stats = dkaft::compute_stats(train_raw);
    dkaft::Dataset tr = dkaft::standardize(train_raw, stats);
    dkaft::Dataset va = dkaft::standardize(val_raw, stats);
    dkaft::EncoderConfig enc;
    enc.n_sta = tr.n_static;
    enc.n_seq = tr.n_sequential;
    enc.n_sta_repr = cfg.n_sta_repr;
    enc.n_seq_emb = cfg.n_seq_emb;
    enc.n_seq_repr = cfg.n_seq_repr;
    enc.dropout_rate = cfg.dropout_rate;
    dkaft::ParameterStore store;
    dkaft::init_encoder_params(store, enc, rng);
    dkaft::init_gp_params(store, enc.latent_dim());
    dkaft::PretrainConfig pc;
    pc.bins = cfg.dml_bins;
    pc.margin = cfg.dml_margin;
    pc.batch_size = cfg.batch_size;
    pc.patience = cfg.dml_patience;
    pc.max_epochs = cfg.dml_max_epochs;
    pc.lr = cfg.lr;
    dkaft::PretrainResult res = dkaft::pretrain(store, enc, tr, va, pc, rng);

    dkaft::Checkpoint cp;
    cp.config = cfg;
    cp.n_static = tr.n_static;
    cp.n_sequential = tr.n_sequential;
    cp.stats = stats;
    cp.params = store.snapshot_values();
    cp.rng_seed = cfg.seed;
    cp.rng_draws = rng.draws();
    dkaft::save_checkpoint(cp, pre_out + ".checkpoint.json");
    write_pretrain_history(res, pre_out + ".map_at_r.csv");
    std::cout << "best MAP@R " << res.best_map_at_r << " at epoch " << res.best_epoch << "\n";
    return 0;
  }

  if (train->parsed()) {
    dkaft::RunConfig cfg = train_cfg.resolve();
    dkaft::Dataset train_raw = dkaft::load_jsonl(train_path);
    dkaft::Dataset val_raw = dkaft::load_jsonl(val_path);
    dkaft::TrainResult res = dkaft::train_model(cfg, train_raw, val_raw);
    dkaft::save_checkpoint(res.checkpoint, train_out + ".checkpoint.json");
    write_training_log(res.log, train_out + ".log.csv");
    if (cfg.pretrain == "dml") write_pretrain_history(res.pretrain, train_out + ".map_at_r.csv");
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& e : res.log) best = std::max(best, e.val_loglik);
    std::cout << "trained " << cfg.head << " head; best val loglik " << best << "\n";
    return 0;
  }

  if (predict->parsed()) {
    dkaft::Checkpoint cp = dkaft::load_checkpoint(cp_path);
    dkaft::Dataset data = dkaft::load_jsonl(pred_data_path);
    std::vector<dkaft::PredictionRow> rows = dkaft::predict_dataset(cp, data, popts);
    dkaft::save_predictions(rows, pred_out);
    std::cout << "wrote " << rows.size() << " predictions to " << pred_out << "\n";
    return 0;
  }

  if (eval->parsed()) {
    std::vector<dkaft::PredictionRow> rows = dkaft::load_predictions(eval_pred_path);
    dkaft::Dataset data = dkaft::load_jsonl(eval_data_path);
    dkaft::EvalOutputs out = dkaft::evaluate_predictions(rows, data, quantiles);

    json report;
    report["mad"] = out.report.mad;
    report["rmse_log"] = out.report.rmse_log;
    report["c_index"] = out.report.c_index;
    report["crps"] = out.report.crps;
    report["ks"] = out.report.ks;
    std::ofstream rf(eval_out + ".report.json");
    if (!rf) throw dkaft::DataError("cannot write report: " + eval_out + ".report.json");
    rf << report.dump(2) << "\n";

    std::ofstream qf(eval_out + ".qp.csv");
    if (!qf) throw dkaft::DataError("cannot write QP curve: " + eval_out + ".qp.csv");
    qf << "q,mad_q,rmse_q,n_q\n";
    for (std::size_t i = 0; i < out.qp_mad.size(); ++i)
      qf << fmt17(out.qp_mad[i].q) << "," << fmt17(out.qp_mad[i].value) << ","
         << fmt17(out.qp_rmse[i].value) << "," << out.qp_mad[i].count << "\n";

    std::ofstream ef(eval_out + ".ecdf.csv");
    if (!ef) throw dkaft::DataError("cannot write ECDF: " + eval_out + ".ecdf.csv");
    ef << "residual,ecdf,normal_cdf\n";
    for (const auto& p : out.ecdf.points)
      ef << fmt17(p.residual) << "," << fmt17(p.ecdf) << "," << fmt17(p.normal_cdf) << "\n";

    std::cout << report.dump(2) << "\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const dkaft::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const dkaft::NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const dkaft::DomainError& e) {
    // a domain breakdown at run time means the numerics went bad
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const dkaft::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const dkaft::ShapeError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const dkaft::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
