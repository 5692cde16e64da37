#include "dkaft/metric.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "dkaft/errors.hpp"
#include "dkaft/math.hpp"

namespace dkaft {

using ad::Tensor;
using ad::Var;

std::size_t BinLabeler::label(double y_log) const {
  std::size_t k = 0;
  for (double e : edges)
    if (e < y_log) ++k;
  return k;
}

BinResult bin_targets(const std::vector<double>& y_log, std::size_t bins) {
  if (bins < 2) throw ConfigError("bin_targets: need at least 2 bins");
  std::set<double> distinct(y_log.begin(), y_log.end());
  if (distinct.size() < bins)
    throw DataError("bin_targets: only " + std::to_string(distinct.size()) +
                    " distinct targets; use fewer bins");
  std::vector<double> sorted = y_log;
  std::sort(sorted.begin(), sorted.end());
  BinResult out;
  out.labeler.bins = bins;
  for (std::size_t k = 1; k < bins; ++k) {
    const double q = static_cast<double>(k) / static_cast<double>(bins);
    out.labeler.edges.push_back(mathx::quantile_sorted(sorted.data(), sorted.size(), q));
  }
  for (std::size_t k = 1; k < out.labeler.edges.size(); ++k)
    if (!(out.labeler.edges[k] > out.labeler.edges[k - 1]))
      throw DataError("bin_targets: duplicate bin edges; use fewer bins");
  out.labels.reserve(y_log.size());
  for (double y : y_log) out.labels.push_back(out.labeler.label(y));
  return out;
}

std::vector<Triplet> mine_triplets(const std::vector<std::size_t>& labels,
                                   const std::vector<std::size_t>& batch, Rng& rng) {
  std::vector<Triplet> out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t anchor = batch[i];
    std::vector<std::size_t> negatives;
    for (std::size_t k = 0; k < batch.size(); ++k)
      if (labels.at(batch[k]) != labels.at(anchor)) negatives.push_back(batch[k]);
    if (negatives.empty()) continue;
    for (std::size_t j = 0; j < batch.size(); ++j) {
      if (j == i || labels.at(batch[j]) != labels.at(anchor)) continue;
      const std::size_t neg = negatives[rng.below(negatives.size())];
      out.push_back(Triplet{anchor, batch[j], neg});
    }
  }
  return out;
}

namespace {

Var euclidean(ad::Tape& t, Var a, Var b) {
  // small offset keeps sqrt differentiable at coincident points
  Var d2 = ad::sum(t, ad::square(t, ad::sub(t, a, b)));
  return ad::sqrt(t, ad::add_scalar(t, d2, 1e-12));
}

}  // namespace

Var triplet_loss(ad::Tape& t, std::span<const Var> anchors, std::span<const Var> positives,
                 std::span<const Var> negatives, double margin) {
  if (margin < 0.0) throw ConfigError("triplet_loss: margin must be non-negative");
  if (anchors.empty() || anchors.size() != positives.size() || anchors.size() != negatives.size())
    throw ShapeError("triplet_loss: anchor/positive/negative counts differ or are empty");
  Var total;
  for (std::size_t i = 0; i < anchors.size(); ++i) {
    Var d_ap = euclidean(t, anchors[i], positives[i]);
    Var d_an = euclidean(t, anchors[i], negatives[i]);
    Var term = ad::clamp_min(t, ad::add_scalar(t, ad::sub(t, d_ap, d_an), margin), 0.0);
    total = (i == 0) ? term : ad::add(t, total, term);
  }
  return ad::mul_scalar(t, total, 1.0 / static_cast<double>(anchors.size()));
}

double map_at_r(const Tensor& embeddings, const std::vector<std::size_t>& labels) {
  const std::size_t n = embeddings.rows();
  if (n < 2) throw DataError("map_at_r: need at least 2 samples");
  if (labels.size() != n) throw ShapeError("map_at_r: labels length does not match embeddings");
  const std::size_t d = embeddings.cols();

  double total = 0.0;
  std::size_t queries = 0;
  std::vector<std::pair<double, std::size_t>> order(n - 1);
  for (std::size_t q = 0; q < n; ++q) {
    std::size_t r = 0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != q && labels[j] == labels[q]) ++r;
    if (r == 0) continue;  // class has no other member; skip query

    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == q) continue;
      double d2 = 0.0;
      for (std::size_t c = 0; c < d; ++c) {
        const double diff = embeddings.at(q, c) - embeddings.at(j, c);
        d2 += diff * diff;
      }
      order[k++] = {d2, j};
    }
    std::sort(order.begin(), order.end());  // ties broken by index

    double ap = 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < r; ++i) {
      if (labels[order[i].second] == labels[q]) {
        ++correct;
        ap += static_cast<double>(correct) / static_cast<double>(i + 1);
      }
    }
    total += ap / static_cast<double>(r);
    ++queries;
  }
  if (queries == 0) throw DataError("map_at_r: no query has a same-class neighbor");
  return total / static_cast<double>(queries);
}

PretrainResult pretrain(ParameterStore& store, const EncoderConfig& cfg, const Dataset& train,
                        const Dataset& val, const PretrainConfig& pcfg, Rng& rng) {
  if (pcfg.max_epochs == 0) throw ConfigError("pretrain: max_epochs must be positive");
  if (pcfg.batch_size < 2) throw ConfigError("pretrain: batch_size must be at least 2");

  std::vector<double> y_train;
  y_train.reserve(train.size());
  for (const auto& r : train.records) y_train.push_back(std::log(r.time));
  BinResult binned = bin_targets(y_train, pcfg.bins);
  std::vector<std::size_t> val_labels;
  val_labels.reserve(val.size());
  for (const auto& r : val.records) val_labels.push_back(binned.labeler.label(std::log(r.time)));

  auto val_embeddings = [&]() {
    Tensor emb(ad::Shape{val.size(), cfg.latent_dim()});
    for (std::size_t i = 0; i < val.size(); ++i) {
      Tensor h = encode_value(store, cfg, val.records[i]);
      for (std::size_t j = 0; j < h.size(); ++j) emb.at(i, j) = h[j];
    }
    return emb;
  };

  PretrainResult out;
  auto best_values = store.snapshot_values();
  out.best_map_at_r = map_at_r(val_embeddings(), val_labels);
  std::size_t since_best = 0;

  std::vector<std::size_t> idx(train.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;

  for (std::size_t epoch = 1; epoch <= pcfg.max_epochs; ++epoch) {
    rng.shuffle(idx);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < idx.size(); start += pcfg.batch_size) {
      const std::size_t stop = std::min(start + pcfg.batch_size, idx.size());
      std::vector<std::size_t> batch(idx.begin() + start, idx.begin() + stop);
      auto triplets = mine_triplets(binned.labels, batch, rng);
      if (triplets.empty()) continue;

      ad::Tape tape;
      ParamCtx ctx(tape, store);
      std::map<std::size_t, Var> latent;
      for (std::size_t rec : batch)
        latent.emplace(rec, encode(ctx, cfg, train.records[rec]));
      std::vector<Var> a, p, ng;
      for (const auto& tr : triplets) {
        a.push_back(latent.at(tr.anchor));
        p.push_back(latent.at(tr.positive));
        ng.push_back(latent.at(tr.negative));
      }
      Var loss = triplet_loss(tape, a, p, ng, pcfg.margin);
      tape.backward(loss);
      adam_step(store, ctx.gradients(), pcfg.lr);
      loss_sum += tape.value(loss).scalar_value();
      ++batches;
    }

    const double val_map = map_at_r(val_embeddings(), val_labels);
    out.history.push_back(
        PretrainEpoch{epoch, batches ? loss_sum / static_cast<double>(batches) : 0.0, val_map});
    if (val_map > out.best_map_at_r) {
      out.best_map_at_r = val_map;
      out.best_epoch = epoch;
      best_values = store.snapshot_values();
      since_best = 0;
    } else {
      ++since_best;
      if (since_best > pcfg.patience) break;
    }
  }

  store.restore_values(best_values);
  store.reset_optimizer_state();
  return out;
}

}  // namespace dkaft
