#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dkaft/tape.hpp"
#include "dkaft/tensor.hpp"

namespace dkaft {

using GradMap = std::map<std::string, ad::Tensor>;

/// Named parameter tensors with per-parameter Adam moment buffers.
/// Single writer: one training loop mutates a store.
class ParameterStore {
public:
  void add(const std::string& name, ad::Tensor init, bool trainable = true);
  bool has(const std::string& name) const { return entries_.count(name) > 0; }
  ad::Tensor& value(const std::string& name);
  const ad::Tensor& value(const std::string& name) const;
  void set_trainable(const std::string& name, bool trainable);
  bool trainable(const std::string& name) const;
  std::vector<std::string> names() const;
  long step_count() const { return step_; }

  std::map<std::string, ad::Tensor> snapshot_values() const;
  void restore_values(const std::map<std::string, ad::Tensor>& snapshot);

  /// Zero all moment buffers and the step counter.
  void reset_optimizer_state();

  friend void adam_step(ParameterStore& store, const GradMap& grads, double lr);

private:
  struct Entry {
    ad::Tensor value;
    ad::Tensor moment1;
    ad::Tensor moment2;
    bool trainable = true;
  };
  std::map<std::string, Entry> entries_;
  long step_ = 0;
};

/// Binds store parameters onto one tape, reusing the Var when a parameter is
/// touched more than once so gradients accumulate on a single leaf.
class ParamCtx {
public:
  ParamCtx(ad::Tape& tape, ParameterStore& store) : tape_(tape), store_(store) {}

  ad::Var operator()(const std::string& name);

  /// Gradients of all bound trainable parameters after tape.backward().
  GradMap gradients() const;

  ad::Tape& tape() { return tape_; }
  ParameterStore& store() { return store_; }

private:
  ad::Tape& tape_;
  ParameterStore& store_;
  std::map<std::string, ad::Var> bound_;
};

/// Adam update (beta1=0.9, beta2=0.999, eps=1e-8) applied in place.
void adam_step(ParameterStore& store, const GradMap& grads, double lr);

/// Max relative error between tape gradients of f and central finite
/// differences over every trainable parameter element; denominator
/// max(|a|, |b|, 1e-8). Parameter values are restored on return.
double grad_check(const std::function<ad::Var(ad::Tape&, ParamCtx&)>& f, ParameterStore& params,
                  double eps);

}  // namespace dkaft
