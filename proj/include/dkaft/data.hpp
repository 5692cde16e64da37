#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dkaft/rng.hpp"

namespace dkaft {

/// One subject: static features, a variable-length sequence of feature rows,
/// and the (possibly right-censored) event time in days.
struct PatientRecord {
  std::string id;
  std::vector<double> static_features;               // length n_sta
  std::vector<std::vector<double>> sequence;         // t_i rows of length n_seq, t_i >= 1
  double time = 0.0;                                 // > 0
  int event = 1;                                     // 1 observed, 0 right-censored
  std::optional<double> truth_mean;                  // generator ground truth (log scale)
  std::optional<double> truth_sigma;                 // generator noise level
};

struct Dataset {
  std::vector<PatientRecord> records;
  std::size_t n_static = 0;
  std::size_t n_sequential = 0;

  std::size_t size() const { return records.size(); }
};

/// Per-feature standardization statistics, computed on training data only.
struct StandardStats {
  std::vector<double> static_mean, static_std;
  std::vector<double> seq_mean, seq_std;
};

Dataset load_jsonl(const std::string& path);
void save_jsonl(const Dataset& ds, const std::string& path);

struct SplitResult {
  std::vector<std::size_t> test_indices;
  std::vector<std::vector<std::size_t>> folds;  // partition of the non-test remainder
};

/// Deterministic shuffle under seed; test_frac held out, remainder in k folds.
SplitResult split(const Dataset& ds, double test_frac, std::size_t k_folds, std::uint64_t seed);

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices);

StandardStats compute_stats(const Dataset& train);
Dataset standardize(const Dataset& ds, const StandardStats& stats);

enum class NoiseMode { Homoscedastic, Heteroscedastic };

struct SynthSpec {
  std::size_t n = 2000;
  std::size_t n_static = 6;
  std::size_t n_sequential = 4;
  std::size_t t_min = 1;
  std::size_t t_max = 20;
  NoiseMode noise = NoiseMode::Homoscedastic;
  double sigma = 0.3;            // homoscedastic noise level
  double hetero_base = -0.3;     // softplus(base + slope * x[feature]) when heteroscedastic
  double hetero_slope = 1.2;
  std::size_t hetero_feature = 1;
  double censor_frac = 0.0;
  std::uint64_t seed = 0;
};

/// Synthetic longitudinal cohort: standard-normal statics, AR(1)-driven
/// sequences, log time from a fixed nonlinear map of both, Gaussian noise
/// that is constant or driven by one static feature. Ground truth (mean and
/// noise level of the log time) is stored on each record.
Dataset synth_generate(const SynthSpec& spec);

}  // namespace dkaft
