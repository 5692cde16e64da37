#include "dkaft/param_store.hpp"

#include <cmath>
#include <limits>

#include "dkaft/errors.hpp"

namespace dkaft {

void ParameterStore::add(const std::string& name, ad::Tensor init, bool trainable) {
  if (entries_.count(name)) throw ConfigError("parameter store: duplicate name '" + name + "'");
  Entry e;
  e.moment1 = ad::Tensor(init.shape());
  e.moment2 = ad::Tensor(init.shape());
  e.value = std::move(init);
  e.trainable = trainable;
  entries_.emplace(name, std::move(e));
}

ad::Tensor& ParameterStore::value(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("parameter store: unknown name '" + name + "'");
  return it->second.value;
}

const ad::Tensor& ParameterStore::value(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("parameter store: unknown name '" + name + "'");
  return it->second.value;
}

void ParameterStore::set_trainable(const std::string& name, bool trainable) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("parameter store: unknown name '" + name + "'");
  it->second.trainable = trainable;
}

bool ParameterStore::trainable(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ConfigError("parameter store: unknown name '" + name + "'");
  return it->second.trainable;
}

std::vector<std::string> ParameterStore::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

std::map<std::string, ad::Tensor> ParameterStore::snapshot_values() const {
  std::map<std::string, ad::Tensor> out;
  for (const auto& [k, e] : entries_) out.emplace(k, e.value);
  return out;
}

void ParameterStore::restore_values(const std::map<std::string, ad::Tensor>& snapshot) {
  for (const auto& [k, v] : snapshot) value(k) = v;
}

void ParameterStore::reset_optimizer_state() {
  step_ = 0;
  for (auto& [k, e] : entries_) {
    e.moment1 = ad::Tensor(e.value.shape());
    e.moment2 = ad::Tensor(e.value.shape());
  }
}

ad::Var ParamCtx::operator()(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  ad::Var v = tape_.leaf(store_.value(name), store_.trainable(name));
  bound_.emplace(name, v);
  return v;
}

GradMap ParamCtx::gradients() const {
  GradMap out;
  for (const auto& [name, var] : bound_) {
    if (!store_.trainable(name)) continue;
    out.emplace(name, tape_.grad_of(var));
  }
  return out;
}

void adam_step(ParameterStore& store, const GradMap& grads, double lr) {
  if (!(lr > 0.0)) throw ConfigError("adam_step: learning rate must be positive");
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++store.step_;
  const double t = static_cast<double>(store.step_);
  const double corr1 = 1.0 - std::pow(beta1, t);
  const double corr2 = 1.0 - std::pow(beta2, t);
  for (const auto& [name, g] : grads) {
    auto it = store.entries_.find(name);
    if (it == store.entries_.end())
      throw ConfigError("adam_step: gradient for unknown parameter '" + name + "'");
    auto& e = it->second;
    if (!e.value.same_shape(g))
      throw ShapeError("adam_step: gradient shape " + ad::shape_str(g.shape()) +
                       " does not match parameter '" + name + "' " +
                       ad::shape_str(e.value.shape()));
    for (std::size_t i = 0; i < g.size(); ++i) {
      e.moment1[i] = beta1 * e.moment1[i] + (1.0 - beta1) * g[i];
      e.moment2[i] = beta2 * e.moment2[i] + (1.0 - beta2) * g[i] * g[i];
      const double mhat = e.moment1[i] / corr1;
      const double vhat = e.moment2[i] / corr2;
      e.value[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

namespace {

double eval_scalar(const std::function<ad::Var(ad::Tape&, ParamCtx&)>& f, ParameterStore& params) {
  ad::Tape tape;
  ParamCtx ctx(tape, params);
  return tape.value(f(tape, ctx)).scalar_value();
}

}  // namespace

double grad_check(const std::function<ad::Var(ad::Tape&, ParamCtx&)>& f, ParameterStore& params,
                  double eps) {
  ad::Tape tape;
  ParamCtx ctx(tape, params);
  ad::Var root = f(tape, ctx);
  tape.backward(root);
  GradMap analytic = ctx.gradients();

  double max_rel = 0.0;
  for (const auto& [name, grad] : analytic) {
    ad::Tensor& value = params.value(name);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      const double fp = eval_scalar(f, params);
      value[i] = saved - eps;
      const double fm = eval_scalar(f, params);
      value[i] = saved;
      const double fd = (fp - fm) / (2.0 * eps);
      const double a = grad[i];
      // resolution of the central difference itself: cancellation of two
      // nearly equal objective values leaves noise ~ |f| ulp / eps
      const double fd_noise = 16.0 * std::numeric_limits<double>::epsilon() *
                              (std::fabs(fp) + std::fabs(fm)) / (2.0 * eps);
      if (std::fabs(a - fd) <= fd_noise) continue;
      const double denom = std::max({std::fabs(a), std::fabs(fd), 1e-8});
      const double rel = std::fabs(a - fd) / denom;
      if (rel > max_rel) max_rel = rel;
    }
  }
  return max_rel;
}

}  // namespace dkaft
