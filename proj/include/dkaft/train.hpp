#pragma once

#include <string>
#include <vector>

#include "dkaft/checkpoint.hpp"
#include "dkaft/data.hpp"
#include "dkaft/eval.hpp"
#include "dkaft/metric.hpp"

namespace dkaft {

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loglik = 0.0;
  long wall_ms = 0;
};

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  PretrainResult pretrain;  // populated when config.pretrain == "dml"
};

/// End-to-end training: optional DML pretraining, inducing-point init for
/// sparse heads, epoch loop on the censoring-aware objective, per-epoch
/// validation log likelihood, best-validation checkpoint.
TrainResult train_model(const RunConfig& config, const Dataset& train_raw,
                        const Dataset& val_raw);

struct PredictionRow {
  std::string id;
  double mu = 0.0;
  double sigma_f2 = 0.0;
  double sigma_obs2 = 0.0;
  double z_hat = 0.0;
};

struct PredictOptions {
  bool mc_dropout = false;
  std::size_t passes = 50;
};

std::vector<PredictionRow> predict_dataset(const Checkpoint& cp, const Dataset& raw,
                                           const PredictOptions& opts = {});
void save_predictions(const std::vector<PredictionRow>& rows, const std::string& path);
std::vector<PredictionRow> load_predictions(const std::string& path);

struct EvalReport {
  double mad = 0.0;
  double rmse_log = 0.0;
  double c_index = 0.0;
  double crps = 0.0;
  double ks = 0.0;
};

struct EvalOutputs {
  EvalReport report;
  QPCurve qp_mad;
  QPCurve qp_rmse;
  EcdfResult ecdf;
};

/// Join predictions with ground-truth records by id and compute the report
/// plus quantile-performance and ECDF curve data.
EvalOutputs evaluate_predictions(const std::vector<PredictionRow>& rows, const Dataset& data,
                                 std::size_t quantiles);

/// Mean held-out predictive log likelihood (censoring-aware).
double validation_loglik(const Checkpoint& cp, const Dataset& raw);

}  // namespace dkaft
