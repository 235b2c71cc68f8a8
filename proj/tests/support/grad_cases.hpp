#pragma once

// Finite-difference gradient checks on random inputs, shared by the unit
// tests and the acceptance binary. The numeric side is an independent
// forward pass in quad precision.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include <quadmath.h>

#include "voltron/callgraph/graph.hpp"
#include "voltron/numerics/grad_check.hpp"
#include "voltron/numerics/rng.hpp"
#include "voltron/snn/model.hpp"
#include "voltron/vgae/loss.hpp"

namespace oracle {

/// Random graph over `n` distinct nodes drawn from [0, vocab), each ordered
/// pair an edge with probability 0.3.
inline voltron::cg::ApiCallGraph random_graph(voltron::Rng& rng, std::size_t n, std::size_t vocab) {
  voltron::cg::ApiCallGraph g;
  g.app_id = "g";
  g.label = rng.uniform() < 0.5 ? voltron::Label::benign : voltron::Label::malware;
  auto ids = rng.sample_without_replacement(vocab, n);
  std::sort(ids.begin(), ids.end());
  g.nodes.assign(ids.begin(), ids.end());
  for (auto a : g.nodes)
    for (auto b : g.nodes)
      if (a != b && rng.uniform() < 0.3) g.edges.push_back({a, b});
  return g;
}

using Q = __float128;

inline constexpr double kEps = 1e-5;

inline Q softplus_q(Q x) { return x > 0 ? x + log1pq(expq(-x)) : log1pq(expq(x)); }

struct QMat {
  std::size_t rows = 0, cols = 0;
  std::vector<Q> v;
  QMat(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, Q(0)) {}
  Q& operator()(std::size_t i, std::size_t j) { return v[i * cols + j]; }
  Q operator()(std::size_t i, std::size_t j) const { return v[i * cols + j]; }
};

inline QMat to_q(const voltron::num::Matrix<double>& m) {
  QMat q(m.rows(), m.cols());
  for (std::size_t k = 0; k < m.size(); ++k) q.v[k] = m[k];
  return q;
}

inline QMat mul(const QMat& a, const QMat& b) {
  QMat c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t k = 0; k < a.cols; ++k) {
      const Q x = a(i, k);
      for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += x * b(k, j);
    }
  return c;
}

/// Multiplies by a 0/1 pattern taken from the 64-bit forward pass.
template <typename T>
void apply_mask(QMat& m, const voltron::num::Matrix<T>& pre) {
  for (std::size_t k = 0; k < m.v.size(); ++k)
    if (!(pre[k] > T(0))) m.v[k] = 0;
}

/// VGAE total loss in quad precision with the ReLU pattern held at `f`.
/// Inside any step that crosses no kink this equals the true loss, and its
/// derivative is the derivative of the active piece.
inline Q vgae_loss_q(const voltron::vgae::VgaeForward<double>& f, const voltron::num::ParamSet<double>& ps) {
  const auto& in = *f.input;
  const std::size_t n = in.size();
  const QMat adj = to_q(in.norm_adj);
  const QMat w0 = to_q(ps.value(0)), w1 = to_q(ps.value(1)), wmu = to_q(ps.value(2)),
             wlv = to_q(ps.value(3)), wc = to_q(ps.value(4)), bc = to_q(ps.value(5));
  QMat x(n, w0.cols);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w0.cols; ++j) x(i, j) = w0(in.node_ids[i], j);
  QMat h1 = mul(adj, x);
  apply_mask(h1, f.enc.a1);
  QMat h2 = mul(mul(adj, h1), w1);
  apply_mask(h2, f.enc.a2);
  const QMat m = mul(adj, h2);
  const QMat mu = mul(m, wmu), lv = mul(m, wlv);
  const std::size_t d = mu.cols;
  QMat z(n, d);
  Q kl = 0;
  for (std::size_t k = 0; k < z.v.size(); ++k) {
    z.v[k] = mu.v[k] + expq(lv.v[k] / 2) * Q(f.latent.noise[k]);
    kl += 1 + lv.v[k] - mu.v[k] * mu.v[k] - expq(lv.v[k]);
  }
  kl = -kl / 2;

  std::size_t pos = 0;
  for (std::size_t k = 0; k < in.target.size(); ++k) pos += in.target[k] != 0;
  const Q pw = Q(n * n - pos) / Q(std::max<std::size_t>(pos, 1));
  Q rec = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      Q s = 0;
      for (std::size_t k = 0; k < d; ++k) s += z(i, k) * z(j, k);
      rec += in.target(i, j) != 0 ? pw * softplus_q(-s) : softplus_q(s);
    }
  rec /= Q(n * n);

  Q logit[2] = {bc.v[0], bc.v[1]};
  for (std::size_t k = 0; k < d; ++k) {
    Q pooled = 0;
    for (std::size_t i = 0; i < n; ++i) pooled += mu(i, k);
    pooled /= Q(n);
    logit[0] += pooled * wc(k, 0);
    logit[1] += pooled * wc(k, 1);
  }
  const Q mx = logit[0] > logit[1] ? logit[0] : logit[1];
  const Q ce = mx + logq(expq(logit[0] - mx) + expq(logit[1] - mx)) - logit[f.label];
  return rec + kl / Q(f.kl_norm) + ce;
}

/// Worst relative error of the 64-bit VGAE total-loss gradient on a random
/// graph with `n` nodes. A probe count of 0 checks every coordinate.
inline double vgae_grad_error(std::uint64_t seed, std::size_t n, double kl_norm = 0.0, std::size_t probes = 0) {
  using namespace voltron;
  Rng rng(seed);
  vgae::VgaeDims dims;
  dims.vocab = n + 8;
  const auto g = random_graph(rng, n, dims.vocab);
  const auto in = vgae::prepare_graph<double>(g, dims.vocab);
  auto model = vgae::VgaeModel<double>::init(dims, derive_seed(seed, "init"));
  for (auto& v : model.params().value(vgae::VgaeModel<double>::b_cls).values()) v = rng.normal();
  const auto noise = vgae::standard_normal<double>(n, dims.latent, rng);

  model.params().zero_grad();
  const auto f = vgae::forward(in, g.label, model, noise, kl_norm);
  vgae::backward(f, model);
  return num::grad_check<double, Q>(
      model.params(), [&](const num::ParamSet<double>& ps) { return vgae_loss_q(f, ps); }, probes, kEps,
      derive_seed(seed, "probes"));
}

/// Pair BCE in quad precision with the ReLU and |·| patterns held at `f`.
inline Q snn_loss_q(const voltron::snn::PairForward<double>& f, const voltron::num::ParamSet<double>& ps,
                    std::size_t twin_layers, const std::vector<double>& a, const std::vector<double>& b,
                    double target) {
  std::vector<QMat> ws, bs;
  for (std::size_t l = 0; l < twin_layers + 2; ++l) {
    ws.push_back(to_q(ps.value(2 * l)));
    bs.push_back(to_q(ps.value(2 * l + 1)));
  }
  auto dense = [&](std::size_t l, const std::vector<Q>& x, const std::vector<double>* pre) {
    const QMat& w = ws[l];
    const QMat& bias = bs[l];
    std::vector<Q> y(w.rows);
    for (std::size_t o = 0; o < w.rows; ++o) {
      Q acc = bias.v[o];
      for (std::size_t i = 0; i < w.cols; ++i) acc += w(o, i) * x[i];
      y[o] = pre && !((*pre)[o] > 0) ? Q(0) : acc;
    }
    return y;
  };
  auto twin = [&](const std::vector<double>& e, const voltron::snn::TwinCache<double>& c) {
    std::vector<Q> x(e.begin(), e.end());
    for (std::size_t l = 0; l < twin_layers; ++l) x = dense(l, x, &c.layers[l].pre);
    return x;
  };
  const auto fl = twin(a, f.left), fr = twin(b, f.right);
  std::vector<Q> diff(fl.size());
  for (std::size_t k = 0; k < diff.size(); ++k) {
    const double s = f.f_left[k] - f.f_right[k];
    diff[k] = s > 0 ? fl[k] - fr[k] : (s < 0 ? fr[k] - fl[k] : Q(0));
  }
  const auto hidden = dense(twin_layers, diff, &f.head0.pre);
  const Q logit = dense(twin_layers + 1, hidden, nullptr)[0];
  return softplus_q(logit) - Q(target) * logit;
}

/// Same check for the SNN pair BCE on a random pair, with random nonzero
/// biases.
inline double snn_grad_error(std::uint64_t seed, const voltron::snn::SnnDims& dims = {}, std::size_t probes = 0) {
  using namespace voltron;
  Rng rng(seed);
  const std::size_t input = dims.input;
  auto model = snn::SnnModel<double>::init(dims, derive_seed(seed, "init"));
  for (std::size_t l = 0; l < model.layer_count(); ++l)
    for (auto& v : model.params().value(model.bias_slot(l)).values()) v = 0.1 * rng.normal();
  std::vector<double> a(input), b(input);
  for (auto& v : a) v = rng.normal();
  for (auto& v : b) v = rng.normal();
  const double target = rng.uniform() < 0.5 ? 0.0 : 1.0;

  model.params().zero_grad();
  const auto f = snn::pair_forward<double>(model, a, b);
  snn::pair_backward(f, model, target);
  const std::size_t h = model.twin_layers();
  return num::grad_check<double, Q>(
      model.params(), [&](const num::ParamSet<double>& ps) { return snn_loss_q(f, ps, h, a, b, target); },
      probes, kEps, derive_seed(seed, "probes"));
}

}  // namespace oracle
