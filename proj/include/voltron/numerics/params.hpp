#pragma once

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "voltron/numerics/matrix.hpp"
#include "voltron/numerics/rng.hpp"

namespace voltron::num {

template <typename T>
struct Param {
  std::string name;
  Matrix<T> value;
  Matrix<T> grad;
  bool has_grad = false;
};

/// Named trainable matrices, each with a gradient accumulator of the same shape.
template <typename T>
class ParamSet {
public:
  std::size_t add(std::string name, Matrix<T> value) {
    if (find(name)) throw ValidationError("duplicate parameter name '" + name + "'");
    Matrix<T> grad(value.rows(), value.cols());
    params_.push_back({std::move(name), std::move(value), std::move(grad), false});
    return params_.size() - 1;
  }

  std::size_t size() const noexcept { return params_.size(); }
  std::size_t coordinate_count() const noexcept {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  Param<T>& operator[](std::size_t i) { return params_[i]; }
  const Param<T>& operator[](std::size_t i) const { return params_[i]; }

  const Matrix<T>& value(std::size_t i) const { return params_[i].value; }
  Matrix<T>& value(std::size_t i) { return params_[i].value; }

  /// Writable gradient; marks it as populated.
  Matrix<T>& grad(std::size_t i) {
    params_[i].has_grad = true;
    return params_[i].grad;
  }
  const Matrix<T>& grad(std::size_t i) const { return params_[i].grad; }

  std::optional<std::size_t> find(const std::string& name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return i;
    return std::nullopt;
  }

  /// Zeroes every accumulator and marks it populated (a fresh backward pass
  /// accumulates into it).
  void zero_grad() {
    for (auto& p : params_) {
      p.grad.fill(T(0));
      p.has_grad = true;
    }
  }

  void clear_grad_flags() {
    for (auto& p : params_) p.has_grad = false;
  }

  void scale_grad(T s) {
    for (auto& p : params_) p.grad *= s;
  }

  bool all_finite() const {
    for (const auto& p : params_)
      if (!num::all_finite(p.value)) return false;
    return true;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  friend bool operator==(const ParamSet& a, const ParamSet& b) {
    if (a.params_.size() != b.params_.size()) return false;
    for (std::size_t i = 0; i < a.params_.size(); ++i) {
      if (a.params_[i].name != b.params_[i].name || !(a.params_[i].value == b.params_[i].value))
        return false;
    }
    return true;
  }

private:
  std::vector<Param<T>> params_;
};

/// Glorot/Xavier uniform initialisation for a fan_in → fan_out map.
template <typename T>
Matrix<T> glorot_uniform(std::size_t rows, std::size_t cols, std::size_t fan_in,
                         std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Matrix<T> m(rows, cols);
  for (auto& v : m.values()) v = static_cast<T>(rng.uniform(-limit, limit));
  return m;
}

}  // namespace voltron::num
