#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "voltron/numerics/params.hpp"

namespace voltron::num {

enum class OptimizerKind { adam, sgd };

inline std::string_view to_string(OptimizerKind k) {
  return k == OptimizerKind::adam ? "adam" : "sgd";
}

inline OptimizerKind parse_optimizer_kind(std::string_view s) {
  if (s == "adam") return OptimizerKind::adam;
  if (s == "sgd") return OptimizerKind::sgd;
  throw ValidationError("unknown optimizer '" + std::string(s) + "'");
}

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Plain SGD or bias-corrected Adam over a ParamSet. Moments are allocated
/// lazily on the first step and must keep matching parameter shapes.
template <typename T>
class Optimizer {
public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg_.learning_rate > 0.0)) throw ValidationError("learning rate must be > 0");
  }

  const OptimizerConfig& config() const noexcept { return cfg_; }
  std::uint64_t steps() const noexcept { return step_; }

  /// Applies one update from the populated gradients, then marks them consumed.
  void step(ParamSet<T>& params) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (!params[i].has_grad) {
        throw StateError("optimizer step: parameter '" + params[i].name + "' has no gradient");
      }
    }
    ++step_;
    if (cfg_.kind == OptimizerKind::sgd) {
      const T lr = static_cast<T>(cfg_.learning_rate);
      for (auto& p : params) {
        for (std::size_t k = 0; k < p.value.size(); ++k) p.value[k] -= lr * p.grad[k];
      }
    } else {
      adam_step(params);
    }
    params.clear_grad_flags();
  }

private:
  void adam_step(ParamSet<T>& params) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.value.rows(), p.value.cols());
        v_.emplace_back(p.value.rows(), p.value.cols());
      }
    }
    if (m_.size() != params.size()) throw StateError("optimizer state does not match parameters");
    const double t = static_cast<double>(step_);
    const T b1 = static_cast<T>(cfg_.beta1);
    const T b2 = static_cast<T>(cfg_.beta2);
    const T c1 = static_cast<T>(1.0 - std::pow(cfg_.beta1, t));
    const T c2 = static_cast<T>(1.0 - std::pow(cfg_.beta2, t));
    const T lr = static_cast<T>(cfg_.learning_rate);
    const T eps = static_cast<T>(cfg_.epsilon);
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      if (!m_[i].same_shape(p.value)) throw StateError("moment shape mismatch for " + p.name);
      for (std::size_t k = 0; k < p.value.size(); ++k) {
        const T g = p.grad[k];
        m_[i][k] = b1 * m_[i][k] + (T(1) - b1) * g;
        v_[i][k] = b2 * v_[i][k] + (T(1) - b2) * g * g;
        const T mhat = m_[i][k] / c1;
        const T vhat = v_[i][k] / c2;
        p.value[k] -= lr * mhat / (std::sqrt(vhat) + eps);
      }
    }
  }

  OptimizerConfig cfg_;
  std::uint64_t step_ = 0;
  std::vector<Matrix<T>> m_;
  std::vector<Matrix<T>> v_;
};

}  // namespace voltron::num
