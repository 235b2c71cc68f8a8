#pragma once

#include <cstdint>
#include <numeric>
#include <vector>

#include "voltron/embedding.hpp"
#include "voltron/numerics/optimizer.hpp"
#include "voltron/snn/model.hpp"

namespace voltron::snn {

/// Indices of two embeddings and whether they share a class (1) or not (0).
struct PairSample {
  std::size_t a = 0;
  std::size_t b = 0;
  int target = 0;
};

struct SnnTrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 4;
  num::OptimizerKind optimizer = num::OptimizerKind::sgd;
  std::size_t pairs_per_epoch = 0;  // 0 → 2 × training set size
  std::size_t batch_size = 64;
  std::uint64_t seed = 0;
  SnnDims dims{};

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("SNN learning rate must be > 0");
    if (epochs == 0 || batch_size == 0) throw ValidationError("SNN epochs and batch size must be positive");
  }
};

/// ⌈count/2⌉ same-class and ⌊count/2⌋ different-class pairs, drawn uniformly
/// with replacement and shuffled. Classes are benign vs malware. An anchor is
/// drawn from all embeddings; its partner is a different embedding of the
/// same class, or any embedding of the other class.
inline std::vector<PairSample> sample_pairs(const std::vector<Embedding>& embs, std::size_t count, Rng& rng) {
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < embs.size(); ++i) {
    if (embs[i].label == Label::benign) by_class[0].push_back(i);
    else if (embs[i].label == Label::malware) by_class[1].push_back(i);
    else throw ValidationError("sample_pairs: embedding '" + embs[i].app_id + "' has no definite label");
  }
  const std::size_t same = (count + 1) / 2;
  const std::size_t diff = count / 2;
  std::vector<PairSample> out;
  out.reserve(count);
  auto cls = [&](std::size_t i) { return embs[i].label == Label::benign ? 0 : 1; };
  for (std::size_t k = 0; k < same; ++k) {
    const std::size_t a = rng.index(embs.size());
    const auto& pool = by_class[cls(a)];
    if (pool.size() < 2) {
      throw SamplingError(std::string("sample_pairs: class ") + (cls(a) ? "malware" : "benign") +
                          " has fewer than 2 members");
    }
    std::size_t b = pool[rng.index(pool.size() - 1)];
    if (b == a) b = pool.back();
    out.push_back({a, b, 1});
  }
  for (std::size_t k = 0; k < diff; ++k) {
    const std::size_t a = rng.index(embs.size());
    const auto& pool = by_class[1 - cls(a)];
    if (pool.empty()) throw SamplingError("sample_pairs: only one class present, cannot form different-class pairs");
    out.push_back({a, pool[rng.index(pool.size())], 0});
  }
  rng.shuffle(out);
  return out;
}

template <typename T>
struct SnnTrainResult {
  SnnModel<T> model;
  std::vector<double> history;  // mean pair loss per epoch
};

/// BCE on the similarity score against the same-class target, mini-batch
/// gradient steps with fresh pairs every epoch.
template <typename T>
SnnTrainResult<T> train_snn(const std::vector<Embedding>& embs, SnnTrainConfig cfg) {
  cfg.validate();
  std::size_t counts[2] = {0, 0};
  for (const auto& e : embs) {
    if (e.values.size() != cfg.dims.input) {
      throw ValidationError("train_snn: embedding '" + e.app_id + "' has length " +
                            std::to_string(e.values.size()));
    }
    if (e.label == Label::benign) ++counts[0];
    else if (e.label == Label::malware) ++counts[1];
  }
  if (counts[0] < 2 || counts[1] < 2) {
    throw ValidationError("train_snn: need at least two benign and two malware embeddings");
  }
  std::vector<std::vector<T>> xs;
  xs.reserve(embs.size());
  for (const auto& e : embs) xs.emplace_back(e.values.begin(), e.values.end());

  SnnTrainResult<T> r;
  r.model = SnnModel<T>::init(cfg.dims, derive_seed(cfg.seed, "snn-init"));
  num::Optimizer<T> opt({cfg.optimizer, cfg.learning_rate});
  Rng rng(derive_seed(cfg.seed, "snn-pairs"));
  const std::size_t per_epoch = cfg.pairs_per_epoch ? cfg.pairs_per_epoch : 2 * embs.size();
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto pairs = sample_pairs(embs, per_epoch, rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < pairs.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(pairs.size(), start + cfg.batch_size);
      const T scale = T(1) / static_cast<T>(end - start);
      r.model.params().zero_grad();
      for (std::size_t k = start; k < end; ++k) {
        const auto& p = pairs[k];
        const T target = static_cast<T>(p.target);
        const auto f = pair_forward<T>(r.model, xs[p.a], xs[p.b]);
        epoch_loss += static_cast<double>(pair_loss(f, target));
        pair_backward(f, r.model, target, scale);
      }
      opt.step(r.model.params());
    }
    r.history.push_back(epoch_loss / static_cast<double>(pairs.size()));
    if (!r.model.params().all_finite()) throw NumericError("SNN parameters became non-finite");
  }
  return r;
}

}  // namespace voltron::snn
