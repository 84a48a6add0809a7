#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "granet/rng.hpp"
#include "granet/tape.hpp"
#include "granet/tensor.hpp"

namespace granet {

/// Named parameter tensors. std::map keeps iteration deterministic (sorted by name).
class ParameterStore {
 public:
  explicit ParameterStore(std::uint64_t seed = 0) : seed_(seed) {}

  Tensor& add(const std::string& name, Tensor t) {
    auto [it, inserted] = params_.emplace(name, std::move(t));
    if (!inserted) throw std::invalid_argument("parameter already exists: " + name);
    return it->second;
  }

  bool has(const std::string& name) const { return params_.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
  }
  const Tensor& get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw std::invalid_argument("unknown parameter: " + name);
    return it->second;
  }

  std::uint64_t seed() const { return seed_; }
  std::size_t count() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Tensor> params_;
  std::uint64_t seed_;
};

/// Gradients accumulated per parameter name between backward passes and the optimizer step.
using GradientMap = std::map<std::string, std::vector<double>>;

/// Binds store parameters onto a tape as tracked leaves and harvests their gradients
/// after backward. One binder per forward pass.
class ParamBinder {
 public:
  ParamBinder(Tape& tape, const ParameterStore& store) : tape_(tape), store_(store) {}

  Var use(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    Var v = tape_.leaf(store_.get(name), true);
    bound_.emplace(name, v);
    return v;
  }

  /// Adds tape gradients into `out`, keyed by parameter name.
  void harvest(GradientMap& out) const {
    for (const auto& [name, var] : bound_) {
      const auto& g = tape_.grad(var);
      auto& dst = out[name];
      if (dst.empty()) dst.assign(store_.get(name).size(), 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
    }
  }

 private:
  Tape& tape_;
  const ParameterStore& store_;
  std::map<std::string, Var> bound_;
};

// --- MLP ----------------------------------------------------------------------

/// Registers affine-layer parameters for widths (w0, w1, ..., wk): weights uniform in
/// +-sqrt(6 / fan_in), biases zero.
inline void mlp_init(ParameterStore& store, const std::string& prefix,
                     const std::vector<std::size_t>& widths, Rng& rng) {
  if (widths.size() < 2) throw std::invalid_argument("mlp_init: need at least two widths");
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::size_t fan_in = widths[l], fan_out = widths[l + 1];
    const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
    Tensor w = Tensor::zeros({fan_in, fan_out});
    for (double& v : w.values) v = rng.uniform(-bound, bound);
    store.add(prefix + "/W" + std::to_string(l), std::move(w));
    store.add(prefix + "/b" + std::to_string(l), Tensor::zeros({1, fan_out}));
  }
}

/// Affine + ReLU per hidden layer, plain affine on the last. Layer widths must match
/// the stored parameter shapes.
inline Var mlp_apply(Tape& tape, ParamBinder& binder, const ParameterStore& store,
                     const std::string& prefix, Var x,
                     const std::vector<std::size_t>& widths) {
  if (widths.size() < 2) throw std::invalid_argument("mlp_apply: need at least two widths");
  Var h = x;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const std::string wname = prefix + "/W" + std::to_string(l);
    const Tensor& w = store.get(wname);
    if (w.rows() != widths[l] || w.cols() != widths[l + 1])
      throw std::invalid_argument("mlp_apply: " + wname + " expected (" +
                                  std::to_string(widths[l]) + "x" +
                                  std::to_string(widths[l + 1]) + "), stored " + w.shape_str());
    if (tape.val(h).cols() != widths[l])
      throw std::invalid_argument("mlp_apply: " + wname + " input width " +
                                  std::to_string(tape.val(h).cols()) + ", expected " +
                                  std::to_string(widths[l]));
    h = tape.affine(h, binder.use(wname), binder.use(prefix + "/b" + std::to_string(l)));
    if (l + 2 < widths.size()) h = tape.relu(h);
  }
  return h;
}

// --- Adam ----------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Standard Adam with bias correction. Moment buffers are created lazily on the
/// first step and keyed by parameter name.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(AdamConfig cfg = {}) : cfg_(cfg) {}

  void set_lr(double lr) { cfg_.lr = lr; }
  double lr() const { return cfg_.lr; }

  void step(ParameterStore& store, const GradientMap& grads) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, param] : store) {
      auto git = grads.find(name);
      if (git == grads.end())
        throw std::runtime_error("adam: missing gradient for parameter " + name);
      const auto& g = git->second;
      if (g.size() != param.size())
        throw std::runtime_error("adam: gradient size mismatch for " + name);
      auto& m = moments_m_[name];
      auto& v = moments_v_[name];
      if (m.empty()) {
        m.assign(param.size(), 0.0);
        v.assign(param.size(), 0.0);
      }
      for (std::size_t i = 0; i < param.size(); ++i) {
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
        const double mhat = m[i] / bc1;
        const double vhat = v[i] / bc2;
        param.values[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
      }
    }
  }

  std::size_t steps_taken() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, std::vector<double>> moments_m_;
  std::map<std::string, std::vector<double>> moments_v_;
};

// --- gradient checking -----------------------------------------------------------

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::size_t worst_index = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;

  bool ok(double tol) const { return max_rel_err < tol; }
};

/// Compares the tape gradient of a scalar-valued closure against central finite
/// differences (h = 1e-5 by default). The closure evaluates f(x); when grad_out is
/// non-null it must also fill d f / d x via a tape backward pass. `sample_stride`
/// checks every k-th input entry (1 = all).
inline GradCheckReport grad_check(
    const std::function<double(const Tensor&, Tensor* grad_out)>& f, const Tensor& x,
    double h = 1e-5, std::size_t sample_stride = 1) {
  Tensor analytic = Tensor::zeros(x.shape);
  const double base = f(x, &analytic);
  if (!std::isfinite(base)) throw std::runtime_error("grad_check: non-finite function value");
  GradCheckReport report;
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); i += sample_stride) {
    const double saved = probe.values[i];
    probe.values[i] = saved + h;
    const double up = f(probe, nullptr);
    probe.values[i] = saved - h;
    const double dn = f(probe, nullptr);
    probe.values[i] = saved;
    if (!std::isfinite(up) || !std::isfinite(dn))
      throw std::runtime_error("grad_check: non-finite value at perturbed input");
    const double numeric = (up - dn) / (2.0 * h);
    const double a = analytic.values[i];
    // Absolute floor keeps finite-difference noise on true-zero gradients from
    // registering as relative error.
    const double rel = std::abs(a - numeric) / std::max({1e-3, std::abs(a), std::abs(numeric)});
    if (rel > report.max_rel_err) {
      report.max_rel_err = rel;
      report.worst_index = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  return report;
}

}  // namespace granet
