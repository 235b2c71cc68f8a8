#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "voltron/numerics/matrix.hpp"

namespace voltron::num {

enum class Activation { identity, relu, sigmoid };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

/// Overflow-free logistic function.
template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

/// log(1 + exp(x)) without overflow.
template <typename T>
T softplus(T x) {
  if (x > T(0)) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

/// Sigmoid clamped to the open interval; keeps probabilities usable in a log.
template <typename T>
T sigmoid_open(T x) {
  constexpr T lo = std::numeric_limits<T>::epsilon();
  const T s = sigmoid(x);
  return std::min(std::max(s, lo), T(1) - lo);
}

template <typename T>
T activate(Activation a, T x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::relu: return x > T(0) ? x : T(0);
    case Activation::sigmoid: return sigmoid(x);
  }
  return x;
}

/// Derivative of the activation expressed through its pre-activation and output.
template <typename T>
T activate_grad(Activation a, T pre, T out) {
  switch (a) {
    case Activation::identity: return T(1);
    case Activation::relu: return pre > T(0) ? T(1) : T(0);
    case Activation::sigmoid: return out * (T(1) - out);
  }
  return T(1);
}

template <typename T>
void activate_inplace(Activation a, Matrix<T>& m) {
  if (a == Activation::identity) return;
  for (auto& v : m.values()) v = activate(a, v);
}

/// Symmetric GCN normalisation D^{-1/2}(A' + I)D^{-1/2}, where A' = A ∨ Aᵀ and
/// existing self-loops are not counted twice. The lower triangle is a mirror
/// of the upper one, so the result is bitwise symmetric.
template <typename T>
Matrix<T> normalize_adjacency(const Matrix<T>& adj) {
  if (adj.rows() != adj.cols()) {
    throw ShapeError("normalize_adjacency: adjacency must be square, got " + adj.shape_str());
  }
  const std::size_t n = adj.rows();
  Matrix<T> s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    s(i, i) = T(1);
    for (std::size_t j = i + 1; j < n; ++j) {
      const T v = (adj(i, j) != T(0) || adj(j, i) != T(0)) ? T(1) : T(0);
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  std::vector<T> inv_sqrt(n);
  for (std::size_t i = 0; i < n; ++i) {
    T deg = T(0);
    for (std::size_t j = 0; j < n; ++j) deg += s(i, j);
    inv_sqrt[i] = T(1) / std::sqrt(deg);
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      const T v = s(i, j) * inv_sqrt[i] * inv_sqrt[j];
      s(i, j) = v;
      s(j, i) = v;
    }
  }
  return s;
}

/// act(Â · H · W)
template <typename T>
Matrix<T> gcn_layer(const Matrix<T>& norm_adj, const Matrix<T>& h, const Matrix<T>& w,
                    Activation act) {
  if (norm_adj.rows() != norm_adj.cols() || norm_adj.cols() != h.rows() ||
      h.cols() != w.rows()) {
    throw ShapeError("gcn_layer: Â " + norm_adj.shape_str() + ", H " + h.shape_str() +
                     ", W " + w.shape_str());
  }
  Matrix<T> out = matmul(norm_adj, matmul(h, w));
  activate_inplace(act, out);
  return out;
}

/// Intermediate values of one dense layer, kept for the backward pass.
template <typename T>
struct DenseCache {
  std::vector<T> input;
  std::vector<T> pre;
  std::vector<T> out;
};

/// act(W·x + b) with W of shape out×in.
template <typename T>
std::vector<T> dense_layer(std::span<const T> x, const Matrix<T>& w, std::span<const T> b,
                           Activation act, DenseCache<T>* cache = nullptr) {
  if (w.cols() != x.size() || w.rows() != b.size()) {
    throw ShapeError("dense_layer: W " + w.shape_str() + ", x " + std::to_string(x.size()) +
                     ", b " + std::to_string(b.size()));
  }
  std::vector<T> pre(w.rows());
  for (std::size_t i = 0; i < w.rows(); ++i) {
    T acc = b[i];
    const T* wrow = &w(i, 0);
    for (std::size_t k = 0; k < x.size(); ++k) acc += wrow[k] * x[k];
    pre[i] = acc;
  }
  std::vector<T> out(pre.size());
  for (std::size_t i = 0; i < pre.size(); ++i) out[i] = activate(act, pre[i]);
  if (cache) {
    cache->input.assign(x.begin(), x.end());
    cache->pre = pre;
    cache->out = out;
  }
  return out;
}

/// Backward pass of dense_layer: accumulates into dw/db and returns dL/dx.
template <typename T>
std::vector<T> dense_backward(const DenseCache<T>& cache, const Matrix<T>& w, Activation act,
                              std::span<const T> dout, Matrix<T>& dw, std::span<T> db) {
  if (cache.pre.empty() && w.rows() != 0) throw StateError("dense_backward before forward");
  if (dout.size() != w.rows() || !dw.same_shape(w) || db.size() != w.rows()) {
    throw ShapeError("dense_backward: gradient shapes do not match layer " + w.shape_str());
  }
  std::vector<T> dx(w.cols(), T(0));
  for (std::size_t i = 0; i < w.rows(); ++i) {
    const T dz = dout[i] * activate_grad(act, cache.pre[i], cache.out[i]);
    if (dz == T(0)) continue;
    db[i] += dz;
    T* dwrow = &dw(i, 0);
    const T* wrow = &w(i, 0);
    for (std::size_t k = 0; k < w.cols(); ++k) {
      dwrow[k] += dz * cache.input[k];
      dx[k] += dz * wrow[k];
    }
  }
  return dx;
}

}  // namespace voltron::num
