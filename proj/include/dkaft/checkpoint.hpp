#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>

#include "dkaft/data.hpp"
#include "dkaft/gp.hpp"
#include "dkaft/param_store.hpp"

namespace dkaft {

/// Full run configuration; every key can come from a key=value config file
/// and be overridden by a CLI flag of the same name.
struct RunConfig {
  std::string head = "ppgp";  // exact | svgp | ppgp | linear
  std::size_t n_sta_repr = 4;
  std::size_t n_seq_emb = 64;
  std::size_t n_seq_repr = 64;
  double dropout_rate = 0.0;
  std::size_t m_inducing = 64;
  double lr = 1e-3;
  std::size_t epochs = 50;
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  std::string pretrain = "none";  // none | dml
  std::size_t dml_bins = 10;
  double dml_margin = 0.2;
  std::size_t dml_patience = 10;
  std::size_t dml_max_epochs = 200;
  std::size_t max_exact_n = 5000;
  std::string survival_denominator = "variance_sum";  // variance_sum | paper_literal

  void validate() const;
  HeadKind head_kind() const { return head_from_string(head); }
  SurvivalDenominator survival_mode() const;
};

/// Parse a flat key=value configuration file ('#' starts a comment).
RunConfig load_config_file(const std::string& path);
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

/// Self-describing training artifact; load(save(x)) reproduces all parameter
/// arrays exactly.
struct Checkpoint {
  int format_version = 1;
  RunConfig config;
  std::size_t n_static = 0;
  std::size_t n_sequential = 0;
  StandardStats stats;
  std::map<std::string, ad::Tensor> params;
  std::optional<ad::Tensor> exact_train_latents;  // exact head only
  std::optional<ad::Tensor> exact_train_y;
  std::uint64_t rng_seed = 0;
  std::uint64_t rng_draws = 0;

  ParameterStore make_store() const;
  EncoderConfig encoder_config() const;
};

void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace dkaft
