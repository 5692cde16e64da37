#include "dkaft/encoder.hpp"

#include <array>
#include <cmath>

#include "dkaft/errors.hpp"

namespace dkaft {

using ad::Shape;
using ad::Tensor;
using ad::Var;

void EncoderConfig::validate() const {
  if (n_sta < 1 || n_seq < 1 || n_sta_repr < 1 || n_seq_emb < 1 || n_seq_repr < 1)
    throw ConfigError("encoder config: all dimensions must be at least 1");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0))
    throw ConfigError("encoder config: dropout_rate must be in [0,1)");
}

namespace {

Tensor uniform_init(Shape shape, std::size_t fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = (2.0 * rng.uniform01() - 1.0) * bound;
  return t;
}

}  // namespace

void init_encoder_params(ParameterStore& store, const EncoderConfig& cfg, Rng& rng) {
  cfg.validate();
  store.add("enc.static_embed", uniform_init({cfg.n_sta_repr, cfg.n_sta}, cfg.n_sta, rng));
  store.add("enc.seq_embed", uniform_init({cfg.n_seq, cfg.n_seq_emb}, cfg.n_seq, rng));
  for (const char* gate : {"reset", "update", "cand"}) {
    store.add(std::string("enc.gru_w_") + gate,
              uniform_init({cfg.n_seq_emb, cfg.n_seq_repr}, cfg.n_seq_emb, rng));
    store.add(std::string("enc.gru_u_") + gate,
              uniform_init({cfg.n_seq_repr, cfg.n_seq_repr}, cfg.n_seq_repr, rng));
    store.add(std::string("enc.gru_b_") + gate, Tensor(Shape{cfg.n_seq_repr}));
  }
}

Var embed_static(ParamCtx& ctx, const EncoderConfig& cfg, const std::vector<double>& x_sta) {
  if (x_sta.size() != cfg.n_sta)
    throw ShapeError("embed_static: expected " + std::to_string(cfg.n_sta) + " features, got " +
                     std::to_string(x_sta.size()));
  ad::Tape& t = ctx.tape();
  Var x = ad::constant(t, Tensor(Shape{cfg.n_sta}, x_sta));
  return ad::tanh(t, ad::matmul(t, ctx("enc.static_embed"), x));
}

Var embed_sequence(ParamCtx& ctx, const EncoderConfig& cfg,
                   const std::vector<std::vector<double>>& x_seq) {
  if (x_seq.empty()) throw DataError("embed_sequence: sequence must have at least one row");
  const std::size_t t_len = x_seq.size();
  std::vector<double> flat;
  flat.reserve(t_len * cfg.n_seq);
  for (const auto& row : x_seq) {
    if (row.size() != cfg.n_seq)
      throw ShapeError("embed_sequence: expected rows of length " + std::to_string(cfg.n_seq) +
                       ", got " + std::to_string(row.size()));
    flat.insert(flat.end(), row.begin(), row.end());
  }
  ad::Tape& t = ctx.tape();
  Var x = ad::constant(t, Tensor(Shape{t_len, cfg.n_seq}, std::move(flat)));
  return ad::tanh(t, ad::matmul(t, x, ctx("enc.seq_embed")));
}

Var gru_forward(ParamCtx& ctx, const EncoderConfig& cfg, ad::Var x_emb) {
  ad::Tape& t = ctx.tape();
  const std::size_t t_len = t.value(x_emb).rows();
  Var w_r = ctx("enc.gru_w_reset"), u_r = ctx("enc.gru_u_reset"), b_r = ctx("enc.gru_b_reset");
  Var w_z = ctx("enc.gru_w_update"), u_z = ctx("enc.gru_u_update"), b_z = ctx("enc.gru_b_update");
  Var w_n = ctx("enc.gru_w_cand"), u_n = ctx("enc.gru_u_cand"), b_n = ctx("enc.gru_b_cand");

  Var h = ad::constant(t, Tensor(Shape{cfg.n_seq_repr}));
  for (std::size_t step = 0; step < t_len; ++step) {
    Var x = ad::row(t, x_emb, step);
    Var r = ad::sigmoid(
        t, ad::add(t, ad::add(t, ad::matmul(t, x, w_r), ad::matmul(t, h, u_r)), b_r));
    Var z = ad::sigmoid(
        t, ad::add(t, ad::add(t, ad::matmul(t, x, w_z), ad::matmul(t, h, u_z)), b_z));
    Var cand = ad::tanh(
        t, ad::add(t, ad::add(t, ad::matmul(t, x, w_n), ad::matmul(t, ad::mul(t, r, h), u_n)),
                  b_n));
    // h <- (1 - z) .* cand + z .* h
    Var one_minus_z = ad::add_scalar(t, ad::neg(t, z), 1.0);
    h = ad::add(t, ad::mul(t, one_minus_z, cand), ad::mul(t, z, h));
  }
  return h;
}

Tensor dropout_mask(const Shape& shape, double rate, Rng& rng) {
  Tensor mask(shape, 1.0);
  if (rate <= 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  for (std::size_t i = 0; i < mask.size(); ++i)
    mask[i] = rng.uniform01() < rate ? 0.0 : keep_scale;
  return mask;
}

Var encode(ParamCtx& ctx, const EncoderConfig& cfg, const PatientRecord& record,
           bool dropout_active, Rng* rng) {
  ad::Tape& t = ctx.tape();
  const bool drop = dropout_active && cfg.dropout_rate > 0.0;
  if (drop && rng == nullptr) throw ConfigError("encode: dropout requires an rng");

  Var h_sta = embed_static(ctx, cfg, record.static_features);
  Var x_emb = embed_sequence(ctx, cfg, record.sequence);
  if (drop) {
    h_sta = ad::mul(t, h_sta, ad::constant(t, dropout_mask(t.value(h_sta).shape(), cfg.dropout_rate, *rng)));
    x_emb = ad::mul(t, x_emb, ad::constant(t, dropout_mask(t.value(x_emb).shape(), cfg.dropout_rate, *rng)));
  }
  Var h_seq = gru_forward(ctx, cfg, x_emb);
  std::array<Var, 2> parts{h_sta, h_seq};
  Var h = ad::concat(t, parts);
  if (drop)
    h = ad::mul(t, h, ad::constant(t, dropout_mask(t.value(h).shape(), cfg.dropout_rate, *rng)));
  return h;
}

Tensor encode_value(ParameterStore& store, const EncoderConfig& cfg, const PatientRecord& record,
                    bool dropout_active, Rng* rng) {
  ad::Tape tape;
  ParamCtx ctx(tape, store);
  Var h = encode(ctx, cfg, record, dropout_active, rng);
  return tape.value(h);
}

}  // namespace dkaft
