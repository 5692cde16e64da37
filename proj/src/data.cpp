#include "dkaft/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "dkaft/errors.hpp"
#include "dkaft/math.hpp"

namespace dkaft {

using nlohmann::json;

namespace {

void validate_record(const PatientRecord& r, std::size_t line_no) {
  const std::string where = "record '" + r.id + "' (line " + std::to_string(line_no) + ")";
  if (!(r.time > 0.0)) throw DataError(where + ": time must be positive");
  if (r.event != 0 && r.event != 1) throw DataError(where + ": event must be 0 or 1");
  if (r.sequence.empty()) throw DataError(where + ": sequence must have at least one row");
  const std::size_t w = r.sequence.front().size();
  for (const auto& row : r.sequence)
    if (row.size() != w) throw DataError(where + ": sequence rows have unequal lengths");
}

}  // namespace

Dataset load_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open dataset file: " + path);
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": malformed JSON: " + e.what());
    }
    PatientRecord r;
    try {
      r.id = j.at("id").get<std::string>();
      r.static_features = j.at("static").get<std::vector<double>>();
      r.sequence = j.at("sequence").get<std::vector<std::vector<double>>>();
      r.time = j.at("time").get<double>();
      r.event = j.at("event").get<int>();
      if (j.contains("truth_mean")) r.truth_mean = j["truth_mean"].get<double>();
      if (j.contains("truth_sigma")) r.truth_sigma = j["truth_sigma"].get<double>();
    } catch (const json::exception& e) {
      throw DataError(path + ":" + std::to_string(line_no) + ": bad record: " + e.what());
    }
    validate_record(r, line_no);
    if (ds.records.empty()) {
      ds.n_static = r.static_features.size();
      ds.n_sequential = r.sequence.front().size();
    } else {
      if (r.static_features.size() != ds.n_static ||
          r.sequence.front().size() != ds.n_sequential)
        throw DataError("record '" + r.id + "': feature dimensions differ from the first record");
    }
    ds.records.push_back(std::move(r));
  }
  if (ds.records.empty()) throw DataError("dataset is empty: " + path);
  return ds;
}

void save_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write dataset file: " + path);
  for (const auto& r : ds.records) {
    json j;
    j["id"] = r.id;
    j["static"] = r.static_features;
    j["sequence"] = r.sequence;
    j["time"] = r.time;
    j["event"] = r.event;
    if (r.truth_mean) j["truth_mean"] = *r.truth_mean;
    if (r.truth_sigma) j["truth_sigma"] = *r.truth_sigma;
    out << j.dump() << "\n";
  }
}

SplitResult split(const Dataset& ds, double test_frac, std::size_t k_folds, std::uint64_t seed) {
  if (!(test_frac > 0.0 && test_frac < 1.0)) throw ConfigError("split: test_frac must be in (0,1)");
  if (k_folds < 2) throw ConfigError("split: k_folds must be at least 2");
  const std::size_t n = ds.size();
  const std::size_t n_test = static_cast<std::size_t>(std::llround(test_frac * n));
  if (n_test == 0 || n - n_test < k_folds)
    throw DataError("split: dataset too small for requested split");
  Rng rng(seed);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  rng.shuffle(idx);
  SplitResult out;
  out.test_indices.assign(idx.begin(), idx.begin() + n_test);
  out.folds.resize(k_folds);
  for (std::size_t i = n_test; i < n; ++i) out.folds[(i - n_test) % k_folds].push_back(idx[i]);
  return out;
}

Dataset subset(const Dataset& ds, const std::vector<std::size_t>& indices) {
  Dataset out;
  out.n_static = ds.n_static;
  out.n_sequential = ds.n_sequential;
  out.records.reserve(indices.size());
  for (auto i : indices) out.records.push_back(ds.records.at(i));
  return out;
}

StandardStats compute_stats(const Dataset& train) {
  if (train.size() == 0) throw DataError("compute_stats: empty dataset");
  StandardStats s;
  s.static_mean.assign(train.n_static, 0.0);
  s.static_std.assign(train.n_static, 0.0);
  s.seq_mean.assign(train.n_sequential, 0.0);
  s.seq_std.assign(train.n_sequential, 0.0);

  for (const auto& r : train.records)
    for (std::size_t k = 0; k < train.n_static; ++k) s.static_mean[k] += r.static_features[k];
  for (auto& m : s.static_mean) m /= static_cast<double>(train.size());
  for (const auto& r : train.records)
    for (std::size_t k = 0; k < train.n_static; ++k) {
      const double d = r.static_features[k] - s.static_mean[k];
      s.static_std[k] += d * d;
    }
  for (auto& v : s.static_std) v = std::sqrt(v / static_cast<double>(train.size()));

  std::size_t n_rows = 0;
  for (const auto& r : train.records) n_rows += r.sequence.size();
  for (const auto& r : train.records)
    for (const auto& row : r.sequence)
      for (std::size_t k = 0; k < train.n_sequential; ++k) s.seq_mean[k] += row[k];
  for (auto& m : s.seq_mean) m /= static_cast<double>(n_rows);
  for (const auto& r : train.records)
    for (const auto& row : r.sequence)
      for (std::size_t k = 0; k < train.n_sequential; ++k) {
        const double d = row[k] - s.seq_mean[k];
        s.seq_std[k] += d * d;
      }
  for (auto& v : s.seq_std) v = std::sqrt(v / static_cast<double>(n_rows));
  return s;
}

Dataset standardize(const Dataset& ds, const StandardStats& stats) {
  if (stats.static_mean.size() != ds.n_static || stats.seq_mean.size() != ds.n_sequential)
    throw DataError("standardize: stats dimensions do not match dataset");
  constexpr double floor = 1e-8;
  Dataset out = ds;
  for (auto& r : out.records) {
    for (std::size_t k = 0; k < ds.n_static; ++k)
      r.static_features[k] =
          (r.static_features[k] - stats.static_mean[k]) / std::max(stats.static_std[k], floor);
    for (auto& row : r.sequence)
      for (std::size_t k = 0; k < ds.n_sequential; ++k)
        row[k] = (row[k] - stats.seq_mean[k]) / std::max(stats.seq_std[k], floor);
  }
  return out;
}

Dataset synth_generate(const SynthSpec& spec) {
  if (spec.n == 0 || spec.n_static == 0 || spec.n_sequential == 0)
    throw ConfigError("synth_generate: n, n_static, n_sequential must be positive");
  if (spec.t_min < 1 || spec.t_max < spec.t_min)
    throw ConfigError("synth_generate: need 1 <= t_min <= t_max");
  if (!(spec.censor_frac >= 0.0 && spec.censor_frac < 1.0))
    throw ConfigError("synth_generate: censor_frac must be in [0,1)");
  if (spec.noise == NoiseMode::Homoscedastic && !(spec.sigma > 0.0))
    throw ConfigError("synth_generate: sigma must be positive");
  if (spec.noise == NoiseMode::Heteroscedastic && spec.hetero_feature >= spec.n_static)
    throw ConfigError("synth_generate: hetero_feature out of range");

  Rng rng(spec.seed);
  constexpr std::size_t latent_dim = 2;
  constexpr std::size_t map_dim = 4;
  constexpr double ar_coef = 0.8;

  // fixed task parameters (drawn once per dataset seed)
  std::vector<double> loading(spec.n_sequential * latent_dim);
  for (auto& v : loading) v = rng.normal() / std::sqrt(static_cast<double>(latent_dim));
  std::vector<double> feat_map(map_dim * spec.n_sequential);
  for (auto& v : feat_map) v = rng.normal() / std::sqrt(static_cast<double>(spec.n_sequential));
  std::vector<double> w_static(spec.n_static);
  for (auto& v : w_static) v = 0.7 * rng.normal() / std::sqrt(static_cast<double>(spec.n_static));
  std::vector<double> w_seq(map_dim);
  for (auto& v : w_seq) v = 0.8 * rng.normal();
  const double intercept = 3.0;

  Dataset ds;
  ds.n_static = spec.n_static;
  ds.n_sequential = spec.n_sequential;
  ds.records.reserve(spec.n);

  for (std::size_t i = 0; i < spec.n; ++i) {
    PatientRecord r;
    r.id = "synth-" + std::to_string(i);
    r.static_features = rng.normal_vec(spec.n_static);

    const std::size_t t_len = spec.t_min + rng.below(spec.t_max - spec.t_min + 1);
    std::vector<double> ar(latent_dim);
    for (auto& a : ar) a = rng.normal();
    r.sequence.resize(t_len);
    for (std::size_t t = 0; t < t_len; ++t) {
      if (t > 0)
        for (auto& a : ar) a = ar_coef * a + std::sqrt(1.0 - ar_coef * ar_coef) * rng.normal();
      auto& row = r.sequence[t];
      row.resize(spec.n_sequential);
      for (std::size_t k = 0; k < spec.n_sequential; ++k) {
        double v = 0.0;
        for (std::size_t l = 0; l < latent_dim; ++l) v += loading[k * latent_dim + l] * ar[l];
        row[k] = v + 0.1 * rng.normal();
      }
    }

    // mean of a fixed nonlinear map of the sequence rows
    std::vector<double> phi_mean(map_dim, 0.0);
    for (const auto& seq_row : r.sequence)
      for (std::size_t p = 0; p < map_dim; ++p) {
        double v = 0.0;
        for (std::size_t k = 0; k < spec.n_sequential; ++k)
          v += feat_map[p * spec.n_sequential + k] * seq_row[k];
        phi_mean[p] += std::tanh(v);
      }
    for (auto& v : phi_mean) v /= static_cast<double>(t_len);

    double mean_y = intercept + std::sin(r.static_features[0]);
    for (std::size_t k = 0; k < spec.n_static; ++k) mean_y += w_static[k] * r.static_features[k];
    for (std::size_t p = 0; p < map_dim; ++p) mean_y += w_seq[p] * phi_mean[p];

    const double sigma =
        spec.noise == NoiseMode::Homoscedastic
            ? spec.sigma
            : mathx::softplus(spec.hetero_base +
                              spec.hetero_slope * r.static_features[spec.hetero_feature]);
    const double y = mean_y + sigma * rng.normal();
    r.time = std::exp(y);
    r.truth_mean = mean_y;
    r.truth_sigma = sigma;
    r.event = 1;
    if (spec.censor_frac > 0.0 && rng.uniform01() < spec.censor_frac) {
      r.time *= rng.uniform_open01();
      r.event = 0;
    }
    ds.records.push_back(std::move(r));
  }
  return ds;
}

}  // namespace dkaft
