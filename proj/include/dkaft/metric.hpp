#pragma once

#include <span>
#include <vector>

#include "dkaft/data.hpp"
#include "dkaft/encoder.hpp"
#include "dkaft/param_store.hpp"

namespace dkaft {

/// Equal-frequency histogram binning of log targets into pseudo-classes.
struct BinLabeler {
  std::vector<double> edges;  // strictly ascending, B-1 of them
  std::size_t bins = 0;
  std::size_t label(double y_log) const;
};

struct BinResult {
  BinLabeler labeler;
  std::vector<std::size_t> labels;
};

BinResult bin_targets(const std::vector<double>& y_log, std::size_t bins);

struct Triplet {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

/// One triplet per ordered anchor-positive pair in the batch, with a
/// uniformly drawn negative. Empty when the batch has no valid triplet.
std::vector<Triplet> mine_triplets(const std::vector<std::size_t>& labels,
                                   const std::vector<std::size_t>& batch, Rng& rng);

/// Mean over triplets of max(0, d(A,P) - d(A,N) + margin), Euclidean d.
ad::Var triplet_loss(ad::Tape& t, std::span<const ad::Var> anchors,
                     std::span<const ad::Var> positives, std::span<const ad::Var> negatives,
                     double margin);

/// Mean average precision at R over all queries whose class has at least one
/// other member (Euclidean retrieval, ties broken by index).
double map_at_r(const ad::Tensor& embeddings, const std::vector<std::size_t>& labels);

struct PretrainConfig {
  std::size_t bins = 10;
  double margin = 0.2;
  std::size_t batch_size = 64;
  std::size_t patience = 10;
  std::size_t max_epochs = 200;
  double lr = 1e-3;
};

struct PretrainEpoch {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_map_at_r = 0.0;
};

struct PretrainResult {
  std::vector<PretrainEpoch> history;
  std::size_t best_epoch = 0;
  double best_map_at_r = 0.0;
};

/// Triplet-loss pretraining of the encoder with MAP@R early stopping; the
/// store is left at the best-epoch parameters with fresh optimizer state.
PretrainResult pretrain(ParameterStore& store, const EncoderConfig& cfg, const Dataset& train,
                        const Dataset& val, const PretrainConfig& pcfg, Rng& rng);

}  // namespace dkaft
