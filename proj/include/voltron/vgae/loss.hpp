#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "voltron/vgae/model.hpp"

namespace voltron::vgae {

template <typename T>
struct LatentOutput {
  Matrix<T> mu;
  Matrix<T> logvar;
  Matrix<T> z;
  Matrix<T> noise;  // the ε used for z
};

namespace detail {

/// X·W0 for one-hot X: a row gather.
template <typename T>
Matrix<T> gather_rows(const Matrix<T>& w, const std::vector<cg::ApiIndex>& ids) {
  Matrix<T> out(ids.size(), w.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto src = w.row(ids[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

template <typename T>
void relu_inplace(Matrix<T>& m) {
  for (auto& v : m.values()) v = v > T(0) ? v : T(0);
}

template <typename T>
void check_model(const GraphInput<T>& in, const VgaeModel<T>& model) {
  if (model.params().size() == 0) throw ShapeError("VGAE model is uninitialised");
  for (auto id : in.node_ids) {
    if (id >= model.dims().vocab) {
      throw ShapeError("graph node " + std::to_string(id) + " outside model vocabulary of size " +
                       std::to_string(model.dims().vocab));
    }
  }
}

}  // namespace detail

/// Encoder activations kept for the backward pass.
template <typename T>
struct EncoderCache {
  Matrix<T> a1, q, a2, m;  // pre-relu layer 1, Â·H1, pre-relu layer 2, Â·H2
};

/// μ and log σ² only (no sampling).
template <typename T>
void encode_moments(const GraphInput<T>& in, const VgaeModel<T>& model, Matrix<T>& mu,
                    Matrix<T>& logvar, EncoderCache<T>* cache = nullptr) {
  detail::check_model(in, model);
  using S = typename VgaeModel<T>::Slot;
  const auto& adj = in.norm_adj;
  Matrix<T> a1 = num::matmul(adj, detail::gather_rows(model[S::w0], in.node_ids));
  Matrix<T> h1 = a1;
  detail::relu_inplace(h1);
  Matrix<T> q = num::matmul(adj, h1);
  Matrix<T> a2 = num::matmul(q, model[S::w1]);
  Matrix<T> h2 = a2;
  detail::relu_inplace(h2);
  Matrix<T> m = num::matmul(adj, h2);
  mu = num::matmul(m, model[S::w_mu]);
  logvar = num::matmul(m, model[S::w_logvar]);
  if (cache) {
    cache->a1 = std::move(a1);
    cache->q = std::move(q);
    cache->a2 = std::move(a2);
    cache->m = std::move(m);
  }
}

/// z = μ + exp(½·log σ²) ⊙ ε with the given ε.
template <typename T>
LatentOutput<T> encode_with_noise(const GraphInput<T>& in, const VgaeModel<T>& model,
                                  Matrix<T> noise, EncoderCache<T>* cache = nullptr) {
  LatentOutput<T> out;
  encode_moments(in, model, out.mu, out.logvar, cache);
  if (!noise.same_shape(out.mu)) {
    throw ShapeError("noise " + noise.shape_str() + " does not match latent " + out.mu.shape_str());
  }
  out.z = out.mu;
  for (std::size_t k = 0; k < out.z.size(); ++k)
    out.z[k] += std::exp(T(0.5) * out.logvar[k]) * noise[k];
  out.noise = std::move(noise);
  return out;
}

template <typename T>
Matrix<T> standard_normal(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix<T> m(rows, cols);
  for (auto& v : m.values()) v = static_cast<T>(rng.normal());
  return m;
}

template <typename T>
LatentOutput<T> encode(const GraphInput<T>& in, const VgaeModel<T>& model, Rng& rng) {
  return encode_with_noise(in, model, standard_normal<T>(in.size(), model.dims().latent, rng));
}

/// Inner products z_i·z_j; the lower triangle mirrors the upper one.
template <typename T>
Matrix<T> latent_logits(const Matrix<T>& z) {
  const std::size_t n = z.rows();
  Matrix<T> s(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      T acc = T(0);
      for (std::size_t k = 0; k < z.cols(); ++k) acc += z(i, k) * z(j, k);
      s(i, j) = acc;
      s(j, i) = acc;
    }
  }
  return s;
}

/// Edge probabilities sigmoid(z_i·z_j), kept strictly inside (0, 1).
template <typename T>
Matrix<T> decode(const Matrix<T>& z) {
  Matrix<T> p = latent_logits(z);
  for (auto& v : p.values()) v = num::sigmoid_open(v);
  return p;
}

template <typename T>
T positive_weight(std::size_t n, std::size_t positives) {
  return static_cast<T>(n * n - positives) / static_cast<T>(std::max<std::size_t>(1, positives));
}

/// Weighted binary cross-entropy between probabilities and the target,
/// averaged over all N² pairs.
template <typename T>
T recon_loss(const GraphInput<T>& in, const Matrix<T>& prob) {
  const std::size_t n = in.size();
  if (n == 0) throw EmptyGraphError("recon_loss on an empty graph");
  if (prob.rows() != n || prob.cols() != n) throw ShapeError("recon_loss: probability shape");
  const T pw = positive_weight<T>(n, in.positives);
  T acc = T(0);
  for (std::size_t k = 0; k < prob.size(); ++k) {
    acc += in.target[k] != T(0) ? -pw * std::log(prob[k]) : -std::log(T(1) - prob[k]);
  }
  return acc / static_cast<T>(n * n);
}

/// Same loss evaluated from the logits z_i·z_j (no clamping).
template <typename T>
T recon_loss_from_logits(const GraphInput<T>& in, const Matrix<T>& logits) {
  const std::size_t n = in.size();
  if (n == 0) throw EmptyGraphError("recon_loss on an empty graph");
  const T pw = positive_weight<T>(n, in.positives);
  T acc = T(0);
  for (std::size_t k = 0; k < logits.size(); ++k) {
    acc += in.target[k] != T(0) ? pw * num::softplus(-logits[k]) : num::softplus(logits[k]);
  }
  return acc / static_cast<T>(n * n);
}

/// −½ Σ (1 + log σ² − μ² − σ²), summed over nodes and dimensions.
template <typename T>
T kl_loss(const Matrix<T>& mu, const Matrix<T>& logvar) {
  if (!mu.same_shape(logvar)) throw ShapeError("kl_loss: mu " + mu.shape_str() + " vs logvar " + logvar.shape_str());
  T acc = T(0);
  for (std::size_t k = 0; k < mu.size(); ++k)
    acc += T(1) + logvar[k] - mu[k] * mu[k] - std::exp(logvar[k]);
  return T(-0.5) * acc;
}

/// W_clsᵀ · meanpool(μ) + b_cls.
template <typename T>
std::array<T, 2> class_logits(const Matrix<T>& mu, const VgaeModel<T>& model) {
  using S = typename VgaeModel<T>::Slot;
  const auto pooled = num::column_mean(mu);
  const auto& w = model[S::w_cls];
  const auto& b = model[S::b_cls];
  if (w.rows() != pooled.size()) throw ShapeError("class_logits: latent width mismatch");
  std::array<T, 2> out{b[0], b[1]};
  for (std::size_t d = 0; d < pooled.size(); ++d) {
    out[0] += pooled[d] * w(d, 0);
    out[1] += pooled[d] * w(d, 1);
  }
  return out;
}

template <typename T>
std::array<T, 2> softmax(const std::array<T, 2>& logits) {
  const T mx = std::max(logits[0], logits[1]);
  const T e0 = std::exp(logits[0] - mx);
  const T e1 = std::exp(logits[1] - mx);
  const T s = e0 + e1;
  return {e0 / s, e1 / s};
}

/// −log softmax(logits)[y] via log-sum-exp.
template <typename T>
T cross_entropy(const std::array<T, 2>& logits, std::size_t y) {
  const T mx = std::max(logits[0], logits[1]);
  const T lse = mx + std::log(std::exp(logits[0] - mx) + std::exp(logits[1] - mx));
  return lse - logits[y];
}

inline std::size_t class_index(Label l) {
  if (l == Label::benign) return kBenign;
  if (l == Label::malware) return kMalware;
  throw ValidationError("VGAE training needs a benign or malware label, got " + std::string(to_string(l)));
}

template <typename T>
struct LossParts {
  T total = T(0);
  T recon = T(0);
  T kl = T(0);        // unscaled KL divergence
  T kl_term = T(0);   // KL / N as it enters the total
  T cls = T(0);
};

/// Everything the backward pass needs from one forward evaluation.
template <typename T>
struct VgaeForward {
  bool complete = false;
  const GraphInput<T>* input = nullptr;
  EncoderCache<T> enc;
  LatentOutput<T> latent;
  Matrix<T> logits;  // z zᵀ
  std::array<T, 2> class_logits{};
  std::size_t label = 0;
  T kl_norm = T(1);
  LossParts<T> parts;
};

/// L = L_rec + L_KL / kl_norm + CE(logits, y). kl_norm is the node count of
/// the graph unless the caller selects another normaliser.
template <typename T>
VgaeForward<T> forward(const GraphInput<T>& in, Label label, const VgaeModel<T>& model,
                       Matrix<T> noise, T kl_norm = T(0)) {
  VgaeForward<T> f;
  f.input = &in;
  f.label = class_index(label);
  f.kl_norm = kl_norm > T(0) ? kl_norm : static_cast<T>(in.size());
  f.latent = encode_with_noise(in, model, std::move(noise), &f.enc);
  f.logits = latent_logits(f.latent.z);
  f.class_logits = class_logits(f.latent.mu, model);
  f.parts.recon = recon_loss_from_logits(in, f.logits);
  f.parts.kl = kl_loss(f.latent.mu, f.latent.logvar);
  f.parts.kl_term = f.parts.kl / f.kl_norm;
  f.parts.cls = cross_entropy(f.class_logits, f.label);
  f.parts.total = f.parts.recon + f.parts.kl_term + f.parts.cls;
  f.complete = true;
  return f;
}

template <typename T>
LossParts<T> total_loss(const GraphInput<T>& in, Label label, const VgaeModel<T>& model, Rng& rng,
                        T kl_norm = T(0)) {
  return forward(in, label, model, standard_normal<T>(in.size(), model.dims().latent, rng), kl_norm)
      .parts;
}

/// Accumulates scale·∂L/∂θ into the model's gradient buffers.
template <typename T>
void backward(const VgaeForward<T>& f, VgaeModel<T>& model, T scale = T(1)) {
  if (!f.complete || f.input == nullptr) throw StateError("VGAE backward called before forward");
  using S = typename VgaeModel<T>::Slot;
  const auto& in = *f.input;
  const auto& adj = in.norm_adj;
  const std::size_t n = in.size();
  const std::size_t latent = model.dims().latent;
  const auto& mu = f.latent.mu;
  const auto& logvar = f.latent.logvar;
  const auto& noise = f.latent.noise;
  const auto& z = f.latent.z;

  // reconstruction: G = ∂L_rec/∂(z zᵀ), then ∂/∂z = (G + Gᵀ) z
  const T pw = positive_weight<T>(n, in.positives);
  const T inv_pairs = T(1) / static_cast<T>(n * n);
  Matrix<T> g(n, n);
  for (std::size_t k = 0; k < g.size(); ++k) {
    const T s = num::sigmoid(f.logits[k]);
    g[k] = (in.target[k] != T(0) ? -pw * (T(1) - s) : s) * inv_pairs;
  }
  Matrix<T> gsym(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) gsym(i, j) = g(i, j) + g(j, i);
  Matrix<T> dz = num::matmul(gsym, z);

  // reparameterisation + KL
  Matrix<T> dmu = dz;
  Matrix<T> dlogvar(n, latent);
  const T inv_kl = T(1) / f.kl_norm;
  for (std::size_t k = 0; k < dmu.size(); ++k) {
    const T sigma = std::exp(T(0.5) * logvar[k]);
    dmu[k] += mu[k] * inv_kl;
    dlogvar[k] = dz[k] * noise[k] * T(0.5) * sigma + T(0.5) * (std::exp(logvar[k]) - T(1)) * inv_kl;
  }

  // classifier over mean-pooled μ
  const auto prob = softmax(f.class_logits);
  std::array<T, 2> dlogit{prob[0], prob[1]};
  dlogit[f.label] -= T(1);
  const auto pooled = num::column_mean(mu);
  {
    auto& dw = model.params().grad(S::w_cls);
    auto& db = model.params().grad(S::b_cls);
    const auto& w = model[S::w_cls];
    for (std::size_t d = 0; d < latent; ++d) {
      dw(d, 0) += scale * pooled[d] * dlogit[0];
      dw(d, 1) += scale * pooled[d] * dlogit[1];
      const T dp = (w(d, 0) * dlogit[0] + w(d, 1) * dlogit[1]) / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) dmu(i, d) += dp;
    }
    db[0] += scale * dlogit[0];
    db[1] += scale * dlogit[1];
  }

  // heads
  auto accumulate = [scale](Matrix<T>& dst, const Matrix<T>& src) {
    for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += scale * src[k];
  };
  accumulate(model.params().grad(S::w_mu), num::matmul_tn(f.enc.m, dmu));
  accumulate(model.params().grad(S::w_logvar), num::matmul_tn(f.enc.m, dlogvar));
  Matrix<T> dm = num::matmul_nt(dmu, model[S::w_mu]);
  dm += num::matmul_nt(dlogvar, model[S::w_logvar]);

  // second GCN layer (Â is symmetric, so Âᵀ = Â)
  Matrix<T> da2 = num::matmul(adj, dm);
  for (std::size_t k = 0; k < da2.size(); ++k)
    if (!(f.enc.a2[k] > T(0))) da2[k] = T(0);
  accumulate(model.params().grad(S::w1), num::matmul_tn(f.enc.q, da2));
  Matrix<T> dq = num::matmul_nt(da2, model[S::w1]);

  // first GCN layer
  Matrix<T> da1 = num::matmul(adj, dq);
  for (std::size_t k = 0; k < da1.size(); ++k)
    if (!(f.enc.a1[k] > T(0))) da1[k] = T(0);
  Matrix<T> dr = num::matmul(adj, da1);
  auto& dw0 = model.params().grad(S::w0);
  for (std::size_t i = 0; i < n; ++i) {
    auto dst = dw0.row(in.node_ids[i]);
    auto src = dr.row(i);
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c] += scale * src[c];
  }
}

/// Deterministic 16-dim graph embedding: mean-pooled μ.
template <typename T>
std::vector<T> embed(const GraphInput<T>& in, const VgaeModel<T>& model) {
  Matrix<T> mu, logvar;
  encode_moments(in, model, mu, logvar);
  return num::column_mean(mu);
}

struct Classification {
  Label label = Label::malware;
  std::array<double, 2> probabilities{0.5, 0.5};  // benign, malware
};

/// Stand-alone VGAE verdict: softmax over the classifier logits, ties go to
/// malware.
template <typename T>
Classification classify_logits(const std::array<T, 2>& logits) {
  const auto p = softmax(logits);
  Classification c;
  c.probabilities = {static_cast<double>(p[0]), static_cast<double>(p[1])};
  c.label = p[kBenign] > p[kMalware] ? Label::benign : Label::malware;
  return c;
}

template <typename T>
Classification vgae_classify(const GraphInput<T>& in, const VgaeModel<T>& model) {
  Matrix<T> mu, logvar;
  encode_moments(in, model, mu, logvar);
  return classify_logits(class_logits(mu, model));
}

}  // namespace voltron::vgae
