#include "dkaft/checkpoint.hpp"

#include <fstream>

#include <json.hpp>

#include "dkaft/errors.hpp"

namespace dkaft {

using nlohmann::json;

void RunConfig::validate() const {
  head_from_string(head);
  if (pretrain != "none" && pretrain != "dml")
    throw ConfigError("config: pretrain must be none or dml");
  if (survival_denominator != "variance_sum" && survival_denominator != "paper_literal")
    throw ConfigError("config: survival_denominator must be variance_sum or paper_literal");
  if (n_sta_repr < 1 || n_seq_emb < 1 || n_seq_repr < 1)
    throw ConfigError("config: encoder dimensions must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("config: dropout_rate must be in [0,1)");
  if (m_inducing < 1) throw ConfigError("config: m_inducing must be positive");
  if (!(lr > 0.0)) throw ConfigError("config: lr must be positive");
  if (epochs < 1) throw ConfigError("config: epochs must be positive");
  if (batch_size < 1) throw ConfigError("config: batch_size must be positive");
  if (dml_bins < 2) throw ConfigError("config: dml_bins must be at least 2");
  if (dml_margin < 0.0) throw ConfigError("config: dml_margin must be non-negative");
  if (dml_max_epochs < 1) throw ConfigError("config: dml_max_epochs must be positive");
  if (max_exact_n < 1) throw ConfigError("config: max_exact_n must be positive");
}

SurvivalDenominator RunConfig::survival_mode() const {
  return survival_denominator == "paper_literal" ? SurvivalDenominator::PaperLiteral
                                                 : SurvivalDenominator::VarianceSum;
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double x = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: bad numeric value for " + key + ": '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long x = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return static_cast<std::uint64_t>(x);
  } catch (const std::exception&) {
    throw ConfigError("config: bad integer value for " + key + ": '" + v + "'");
  }
}

}  // namespace

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "head") cfg.head = value;
  else if (key == "n_sta_repr") cfg.n_sta_repr = parse_uint(key, value);
  else if (key == "n_seq_emb") cfg.n_seq_emb = parse_uint(key, value);
  else if (key == "n_seq_repr") cfg.n_seq_repr = parse_uint(key, value);
  else if (key == "dropout_rate") cfg.dropout_rate = parse_double(key, value);
  else if (key == "m_inducing") cfg.m_inducing = parse_uint(key, value);
  else if (key == "lr") cfg.lr = parse_double(key, value);
  else if (key == "epochs") cfg.epochs = parse_uint(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_uint(key, value);
  else if (key == "seed") cfg.seed = parse_uint(key, value);
  else if (key == "pretrain") cfg.pretrain = value;
  else if (key == "dml_bins") cfg.dml_bins = parse_uint(key, value);
  else if (key == "dml_margin") cfg.dml_margin = parse_double(key, value);
  else if (key == "dml_patience") cfg.dml_patience = parse_uint(key, value);
  else if (key == "dml_max_epochs") cfg.dml_max_epochs = parse_uint(key, value);
  else if (key == "max_exact_n") cfg.max_exact_n = parse_uint(key, value);
  else if (key == "survival_denominator") cfg.survival_denominator = value;
  else throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

namespace {

json tensor_to_json(const ad::Tensor& t) {
  json j;
  j["shape"] = t.shape();
  j["data"] = t.vec();
  return j;
}

ad::Tensor tensor_from_json(const json& j) {
  return ad::Tensor(j.at("shape").get<ad::Shape>(), j.at("data").get<std::vector<double>>());
}

json config_to_json(const RunConfig& c) {
  json j;
  j["head"] = c.head;
  j["n_sta_repr"] = c.n_sta_repr;
  j["n_seq_emb"] = c.n_seq_emb;
  j["n_seq_repr"] = c.n_seq_repr;
  j["dropout_rate"] = c.dropout_rate;
  j["m_inducing"] = c.m_inducing;
  j["lr"] = c.lr;
  j["epochs"] = c.epochs;
  j["batch_size"] = c.batch_size;
  j["seed"] = c.seed;
  j["pretrain"] = c.pretrain;
  j["dml_bins"] = c.dml_bins;
  j["dml_margin"] = c.dml_margin;
  j["dml_patience"] = c.dml_patience;
  j["dml_max_epochs"] = c.dml_max_epochs;
  j["max_exact_n"] = c.max_exact_n;
  j["survival_denominator"] = c.survival_denominator;
  return j;
}

RunConfig config_from_json(const json& j) {
  RunConfig c;
  c.head = j.at("head").get<std::string>();
  c.n_sta_repr = j.at("n_sta_repr").get<std::size_t>();
  c.n_seq_emb = j.at("n_seq_emb").get<std::size_t>();
  c.n_seq_repr = j.at("n_seq_repr").get<std::size_t>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  c.m_inducing = j.at("m_inducing").get<std::size_t>();
  c.lr = j.at("lr").get<double>();
  c.epochs = j.at("epochs").get<std::size_t>();
  c.batch_size = j.at("batch_size").get<std::size_t>();
  c.seed = j.at("seed").get<std::uint64_t>();
  c.pretrain = j.at("pretrain").get<std::string>();
  c.dml_bins = j.at("dml_bins").get<std::size_t>();
  c.dml_margin = j.at("dml_margin").get<double>();
  c.dml_patience = j.at("dml_patience").get<std::size_t>();
  c.dml_max_epochs = j.at("dml_max_epochs").get<std::size_t>();
  c.max_exact_n = j.at("max_exact_n").get<std::size_t>();
  c.survival_denominator = j.at("survival_denominator").get<std::string>();
  return c;
}

}  // namespace

ParameterStore Checkpoint::make_store() const {
  ParameterStore store;
  for (const auto& [name, tensor] : params) store.add(name, tensor);
  return store;
}

EncoderConfig Checkpoint::encoder_config() const {
  EncoderConfig e;
  e.n_sta = n_static;
  e.n_seq = n_sequential;
  e.n_sta_repr = config.n_sta_repr;
  e.n_seq_emb = config.n_seq_emb;
  e.n_seq_repr = config.n_seq_repr;
  e.dropout_rate = config.dropout_rate;
  return e;
}

void save_checkpoint(const Checkpoint& cp, const std::string& path) {
  json j;
  j["format_version"] = cp.format_version;
  j["config"] = config_to_json(cp.config);
  j["n_static"] = cp.n_static;
  j["n_sequential"] = cp.n_sequential;
  j["stats"] = {{"static_mean", cp.stats.static_mean},
                {"static_std", cp.stats.static_std},
                {"seq_mean", cp.stats.seq_mean},
                {"seq_std", cp.stats.seq_std}};
  json params = json::object();
  for (const auto& [name, tensor] : cp.params) params[name] = tensor_to_json(tensor);
  j["params"] = params;
  if (cp.exact_train_latents) {
    j["exact_train"] = {{"latents", tensor_to_json(*cp.exact_train_latents)},
                        {"y", tensor_to_json(*cp.exact_train_y)}};
  }
  j["rng"] = {{"seed", cp.rng_seed}, {"draws", cp.rng_draws}};
  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path);
  out << j.dump(2) << "\n";
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": malformed JSON: " + e.what());
  }
  Checkpoint cp;
  try {
    cp.format_version = j.at("format_version").get<int>();
    if (cp.format_version != 1)
      throw DataError("checkpoint " + path + ": unsupported format version");
    cp.config = config_from_json(j.at("config"));
    cp.n_static = j.at("n_static").get<std::size_t>();
    cp.n_sequential = j.at("n_sequential").get<std::size_t>();
    const json& s = j.at("stats");
    cp.stats.static_mean = s.at("static_mean").get<std::vector<double>>();
    cp.stats.static_std = s.at("static_std").get<std::vector<double>>();
    cp.stats.seq_mean = s.at("seq_mean").get<std::vector<double>>();
    cp.stats.seq_std = s.at("seq_std").get<std::vector<double>>();
    for (const auto& [name, tj] : j.at("params").items())
      cp.params.emplace(name, tensor_from_json(tj));
    if (j.contains("exact_train")) {
      cp.exact_train_latents = tensor_from_json(j["exact_train"].at("latents"));
      cp.exact_train_y = tensor_from_json(j["exact_train"].at("y"));
    }
    cp.rng_seed = j.at("rng").at("seed").get<std::uint64_t>();
    cp.rng_draws = j.at("rng").at("draws").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw DataError("checkpoint " + path + ": bad contents: " + e.what());
  }
  return cp;
}

}  // namespace dkaft
