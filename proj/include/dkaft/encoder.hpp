#pragma once

#include <string>

#include "dkaft/data.hpp"
#include "dkaft/param_store.hpp"
#include "dkaft/rng.hpp"
#include "dkaft/tape.hpp"

namespace dkaft {

struct EncoderConfig {
  std::size_t n_sta = 0;       // static input dim
  std::size_t n_seq = 0;       // sequential input dim
  std::size_t n_sta_repr = 4;  // static latent dim
  std::size_t n_seq_emb = 64;  // sequence embedding dim
  std::size_t n_seq_repr = 64; // GRU hidden dim
  double dropout_rate = 0.0;   // [0, 1)

  std::size_t latent_dim() const { return n_sta_repr + n_seq_repr; }
  void validate() const;
};

/// Register encoder parameters under "enc.*": embedding matrices, GRU gate
/// weights and biases. Weights uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)),
/// biases zero.
void init_encoder_params(ParameterStore& store, const EncoderConfig& cfg, Rng& rng);

/// h_sta = tanh(A x_sta)
ad::Var embed_static(ParamCtx& ctx, const EncoderConfig& cfg, const std::vector<double>& x_sta);

/// Row-wise tanh(X_seq B); errors on an empty sequence.
ad::Var embed_sequence(ParamCtx& ctx, const EncoderConfig& cfg,
                       const std::vector<std::vector<double>>& x_seq);

/// GRU over the embedded rows from a zero initial state; returns the final
/// hidden state only.
ad::Var gru_forward(ParamCtx& ctx, const EncoderConfig& cfg, ad::Var x_emb);

/// Latent representation h = [h_sta ; h_seq]. With dropout_active, inverted
/// dropout masks (drawn from rng) are applied to both embedding outputs and
/// to h itself.
ad::Var encode(ParamCtx& ctx, const EncoderConfig& cfg, const PatientRecord& record,
               bool dropout_active = false, Rng* rng = nullptr);

/// Value-only convenience: encode on a scratch tape with frozen parameters.
ad::Tensor encode_value(ParameterStore& store, const EncoderConfig& cfg,
                        const PatientRecord& record, bool dropout_active = false,
                        Rng* rng = nullptr);

/// Inverted-dropout mask: entries 0 with probability rate, else 1/(1-rate).
ad::Tensor dropout_mask(const ad::Shape& shape, double rate, Rng& rng);

}  // namespace dkaft
