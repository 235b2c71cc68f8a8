#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "voltron/callgraph/graph.hpp"
#include "voltron/numerics/layers.hpp"
#include "voltron/numerics/params.hpp"
#include "voltron/numerics/rng.hpp"

namespace voltron::vgae {

using num::Matrix;

struct VgaeDims {
  std::size_t vocab = 0;
  std::size_t hidden1 = 32;
  std::size_t hidden2 = 24;
  std::size_t latent = 16;
  static constexpr std::size_t classes = 2;

  friend bool operator==(const VgaeDims&, const VgaeDims&) = default;
};

/// Class positions in the logit vector.
inline constexpr std::size_t kBenign = 0;
inline constexpr std::size_t kMalware = 1;

/// GCN encoder (two shared relu layers, linear μ / log σ² heads) plus a linear
/// classifier over the mean-pooled μ.
template <typename T>
class VgaeModel {
public:
  enum Slot : std::size_t { w0 = 0, w1, w_mu, w_logvar, w_cls, b_cls };

  VgaeModel() = default;

  /// Glorot-uniform weights, zero classifier bias.
  static VgaeModel init(const VgaeDims& dims, std::uint64_t seed) {
    if (dims.vocab == 0) throw EmptyVocabError("VGAE needs a non-empty vocabulary");
    Rng rng(seed);
    VgaeModel m;
    m.dims_ = dims;
    m.params_.add("w0", num::glorot_uniform<T>(dims.vocab, dims.hidden1, dims.vocab, dims.hidden1, rng));
    m.params_.add("w1", num::glorot_uniform<T>(dims.hidden1, dims.hidden2, dims.hidden1, dims.hidden2, rng));
    m.params_.add("w_mu", num::glorot_uniform<T>(dims.hidden2, dims.latent, dims.hidden2, dims.latent, rng));
    m.params_.add("w_logvar",
                  num::glorot_uniform<T>(dims.hidden2, dims.latent, dims.hidden2, dims.latent, rng));
    m.params_.add("w_cls", num::glorot_uniform<T>(dims.latent, VgaeDims::classes, dims.latent,
                                                  VgaeDims::classes, rng));
    m.params_.add("b_cls", Matrix<T>(1, VgaeDims::classes));
    return m;
  }

  /// Same shapes, every parameter zero.
  static VgaeModel zeros(const VgaeDims& dims) {
    VgaeModel m = init(dims, 0);
    for (auto& p : m.params_) p.value.fill(T(0));
    return m;
  }

  const VgaeDims& dims() const noexcept { return dims_; }
  num::ParamSet<T>& params() noexcept { return params_; }
  const num::ParamSet<T>& params() const noexcept { return params_; }
  const Matrix<T>& operator[](Slot s) const { return params_.value(s); }
  Matrix<T>& operator[](Slot s) { return params_.value(s); }

  /// Restores a model from stored matrices, checking every shape.
  static VgaeModel from_params(const VgaeDims& dims, num::ParamSet<T> params) {
    VgaeModel m = zeros(dims);
    if (params.size() != m.params_.size()) throw ShapeError("VGAE parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name != m.params_[i].name || !params[i].value.same_shape(m.params_[i].value)) {
        throw ShapeError("VGAE parameter '" + params[i].name + "' has shape " +
                         params[i].value.shape_str() + ", expected '" + m.params_[i].name + "' " +
                         m.params_[i].value.shape_str());
      }
    }
    m.params_ = std::move(params);
    return m;
  }

  friend bool operator==(const VgaeModel& a, const VgaeModel& b) {
    return a.dims_ == b.dims_ && a.params_ == b.params_;
  }

private:
  VgaeDims dims_;
  num::ParamSet<T> params_;
};

/// Per-graph tensors that do not depend on the model: normalised adjacency,
/// node identities and the symmetric reconstruction target.
template <typename T>
struct GraphInput {
  std::vector<cg::ApiIndex> node_ids;
  Matrix<T> norm_adj;
  Matrix<T> target;         // symmetrised adjacency, zero diagonal
  std::size_t positives = 0;  // nonzero entries of target

  std::size_t size() const noexcept { return node_ids.size(); }
};

template <typename T>
GraphInput<T> prepare_graph(const cg::ApiCallGraph& g, std::size_t vocab_size) {
  if (g.nodes.empty()) throw EmptyGraphError("graph '" + g.app_id + "' has no nodes");
  for (auto id : g.nodes) {
    if (id >= vocab_size) {
      throw ShapeError("graph '" + g.app_id + "' node " + std::to_string(id) +
                       " outside vocabulary of size " + std::to_string(vocab_size));
    }
  }
  GraphInput<T> in;
  in.node_ids = g.nodes;
  const auto adj = g.template adjacency<T>();
  in.norm_adj = num::normalize_adjacency(adj);
  const std::size_t n = g.nodes.size();
  in.target = Matrix<T>(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && (adj(i, j) != T(0) || adj(j, i) != T(0))) {
        in.target(i, j) = T(1);
        ++in.positives;
      }
    }
  }
  return in;
}

/// One-hot identity features, one row per node.
template <typename T>
Matrix<T> node_features(const cg::ApiCallGraph& g, std::size_t vocab_size) {
  Matrix<T> x(g.nodes.size(), vocab_size);
  for (std::size_t i = 0; i < g.nodes.size(); ++i) {
    if (g.nodes[i] >= vocab_size) {
      throw ShapeError("node index " + std::to_string(g.nodes[i]) + " >= vocabulary size " +
                       std::to_string(vocab_size));
    }
    x(i, g.nodes[i]) = T(1);
  }
  return x;
}

}  // namespace voltron::vgae
