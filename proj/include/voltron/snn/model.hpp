#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "voltron/numerics/layers.hpp"
#include "voltron/numerics/params.hpp"
#include "voltron/numerics/persist.hpp"

namespace voltron::snn {

using num::Activation;
using num::Matrix;

struct SnnDims {
  std::size_t input = 16;
  std::vector<std::size_t> twin{128, 64, 32};
  std::size_t head = 16;

  friend bool operator==(const SnnDims&, const SnnDims&) = default;
};

/// Siamese scorer. The twin layers exist once and both inputs run through
/// the same storage; the head maps |f(a) − f(b)| to a logit.
template <typename T>
class SnnModel {
public:
  SnnModel() = default;

  /// Glorot-uniform weights, zero biases.
  static SnnModel init(const SnnDims& dims, std::uint64_t seed) {
    if (dims.input == 0 || dims.twin.empty() || dims.head == 0)
      throw ValidationError("SNN widths must be positive");
    Rng rng(seed);
    SnnModel m;
    m.dims_ = dims;
    std::size_t in = dims.input;
    for (std::size_t l = 0; l < dims.twin.size(); ++l) {
      m.add_layer("twin" + std::to_string(l), in, dims.twin[l], rng);
      in = dims.twin[l];
    }
    m.add_layer("head0", in, dims.head, rng);
    m.add_layer("head1", dims.head, 1, rng);
    return m;
  }

  const SnnDims& dims() const noexcept { return dims_; }
  num::ParamSet<T>& params() noexcept { return params_; }
  const num::ParamSet<T>& params() const noexcept { return params_; }

  std::size_t twin_layers() const noexcept { return dims_.twin.size(); }
  std::size_t layer_count() const noexcept { return dims_.twin.size() + 2; }
  /// Parameter slots of layer l (twin layers first, then the two head layers).
  std::size_t weight_slot(std::size_t l) const noexcept { return 2 * l; }
  std::size_t bias_slot(std::size_t l) const noexcept { return 2 * l + 1; }
  const Matrix<T>& weight(std::size_t l) const { return params_.value(weight_slot(l)); }
  std::span<const T> bias(std::size_t l) const { return params_.value(bias_slot(l)).values(); }
  Activation activation(std::size_t l) const noexcept {
    return l + 1 == layer_count() ? Activation::identity : Activation::relu;
  }

  static SnnModel from_params(const SnnDims& dims, num::ParamSet<T> params) {
    SnnModel m = init(dims, 0);
    if (params.size() != m.params_.size()) throw ShapeError("SNN parameter count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i].name != m.params_[i].name || !params[i].value.same_shape(m.params_[i].value)) {
        throw ShapeError("SNN parameter '" + params[i].name + "' has shape " +
                         params[i].value.shape_str() + ", expected " + m.params_[i].value.shape_str());
      }
    }
    m.params_ = std::move(params);
    return m;
  }

  friend bool operator==(const SnnModel& a, const SnnModel& b) {
    return a.dims_ == b.dims_ && a.params_ == b.params_;
  }

private:
  void add_layer(const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
    params_.add(name + ".w", num::glorot_uniform<T>(out, in, in, out, rng));
    params_.add(name + ".b", Matrix<T>(out, 1));
  }

  SnnDims dims_;
  num::ParamSet<T> params_;
};

template <typename T>
struct TwinCache {
  std::vector<num::DenseCache<T>> layers;
};

/// Shared subnetwork: relu chain 16 → 128 → 64 → 32.
template <typename T>
std::vector<T> subnetwork_forward(const SnnModel<T>& model, std::span<const T> embedding,
                                  TwinCache<T>* cache = nullptr) {
  if (embedding.size() != model.dims().input) {
    throw ShapeError("SNN expects embeddings of length " + std::to_string(model.dims().input) +
                     ", got " + std::to_string(embedding.size()));
  }
  if (cache) cache->layers.assign(model.twin_layers(), {});
  std::vector<T> x(embedding.begin(), embedding.end());
  for (std::size_t l = 0; l < model.twin_layers(); ++l) {
    x = num::dense_layer<T>(x, model.weight(l), model.bias(l), Activation::relu,
                            cache ? &cache->layers[l] : nullptr);
  }
  return x;
}

/// Values of one pair evaluation kept for the backward pass.
template <typename T>
struct PairForward {
  bool complete = false;
  TwinCache<T> left, right;
  std::vector<T> f_left, f_right, diff;
  num::DenseCache<T> head0, head1;
  T logit = T(0);
};

template <typename T>
PairForward<T> pair_forward(const SnnModel<T>& model, std::span<const T> a, std::span<const T> b) {
  PairForward<T> f;
  f.f_left = subnetwork_forward(model, a, &f.left);
  f.f_right = subnetwork_forward(model, b, &f.right);
  f.diff.resize(f.f_left.size());
  for (std::size_t k = 0; k < f.diff.size(); ++k) f.diff[k] = std::abs(f.f_left[k] - f.f_right[k]);
  const std::size_t h = model.twin_layers();
  auto hidden = num::dense_layer<T>(f.diff, model.weight(h), model.bias(h), Activation::relu, &f.head0);
  auto out = num::dense_layer<T>(hidden, model.weight(h + 1), model.bias(h + 1), Activation::identity,
                                 &f.head1);
  f.logit = out[0];
  f.complete = true;
  return f;
}

/// sigmoid(head(|f(e1) − f(e2)|)), strictly inside (0, 1).
template <typename T>
T similarity(const SnnModel<T>& model, std::span<const T> e1, std::span<const T> e2) {
  return num::sigmoid_open(pair_forward(model, e1, e2).logit);
}

/// Binary cross-entropy of the similarity against target ∈ {0, 1}, computed
/// from the logit.
template <typename T>
T pair_loss(const PairForward<T>& f, T target) {
  return num::softplus(f.logit) - target * f.logit;
}

/// Accumulates scale·∂BCE/∂θ into the model's gradients. Both twins write into
/// the same buffers.
template <typename T>
void pair_backward(const PairForward<T>& f, SnnModel<T>& model, T target, T scale = T(1)) {
  if (!f.complete) throw StateError("SNN backward called before forward");
  auto& ps = model.params();
  const std::size_t h = model.twin_layers();
  const std::vector<T> dlogit{scale * (num::sigmoid(f.logit) - target)};
  auto dhidden = num::dense_backward<T>(f.head1, model.weight(h + 1), Activation::identity, dlogit,
                                        ps.grad(model.weight_slot(h + 1)),
                                        ps.grad(model.bias_slot(h + 1)).values());
  auto ddiff = num::dense_backward<T>(f.head0, model.weight(h), Activation::relu, dhidden,
                                      ps.grad(model.weight_slot(h)), ps.grad(model.bias_slot(h)).values());
  std::vector<T> dl(ddiff.size()), dr(ddiff.size());
  for (std::size_t k = 0; k < ddiff.size(); ++k) {
    const T d = f.f_left[k] - f.f_right[k];
    const T sign = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
    dl[k] = ddiff[k] * sign;
    dr[k] = -dl[k];
  }
  for (std::size_t l = h; l-- > 0;) {
    auto& dw = ps.grad(model.weight_slot(l));
    auto db = ps.grad(model.bias_slot(l)).values();
    dl = num::dense_backward<T>(f.left.layers[l], model.weight(l), Activation::relu, dl, dw, db);
    dr = num::dense_backward<T>(f.right.layers[l], model.weight(l), Activation::relu, dr, dw, db);
  }
}

// --- persistence -------------------------------------------------------------

inline constexpr const char* kSnnFormat = "voltron-model/1";

template <typename T>
nlohmann::json save_snn(const SnnModel<T>& model, const std::string& vocab_hash,
                        num::ParamEncoding enc = num::ParamEncoding::decimal) {
  const auto& d = model.dims();
  return {{"format", kSnnFormat},
          {"kind", "snn"},
          {"vocab_hash", vocab_hash},
          {"encoding", std::string(num::to_string(enc))},
          {"shapes", {{"input", d.input}, {"twin", d.twin}, {"head", d.head}}},
          {"params", num::params_to_json(model.params(), enc)}};
}

template <typename T>
SnnModel<T> load_snn(const nlohmann::json& doc, const std::string& expected_vocab_hash) {
  try {
    if (doc.value("format", "") != kSnnFormat)
      throw ParseError("unsupported model format '" + doc.value("format", "") + "'");
    if (doc.value("kind", "") != "snn") throw ParseError("model document is not an SNN model");
    const auto hash = doc.at("vocab_hash").get<std::string>();
    if (hash != expected_vocab_hash) {
      throw ValidationError("SNN model vocabulary hash " + hash + " does not match " + expected_vocab_hash);
    }
    SnnDims dims;
    dims.input = doc.at("shapes").at("input").get<std::size_t>();
    dims.twin = doc.at("shapes").at("twin").get<std::vector<std::size_t>>();
    dims.head = doc.at("shapes").at("head").get<std::size_t>();
    const auto enc = num::parse_param_encoding(doc.at("encoding").get<std::string>());
    return SnnModel<T>::from_params(dims, num::params_from_json<T>(doc.at("params"), enc));
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("SNN model document: ") + e.what());
  }
}

}  // namespace voltron::snn
