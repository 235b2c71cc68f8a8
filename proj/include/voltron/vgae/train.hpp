#pragma once

#include <cstdint>
#include <numeric>
#include <string_view>
#include <utility>
#include <vector>

#include "voltron/numerics/optimizer.hpp"
#include "voltron/vgae/loss.hpp"

namespace voltron::vgae {

/// What divides the KL term: the node count of each graph, or the number of
/// graphs in the training corpus.
enum class KlNormalization { node_count, corpus_size };

inline std::string_view to_string(KlNormalization k) {
  return k == KlNormalization::node_count ? "node-count" : "corpus-size";
}

inline KlNormalization parse_kl_normalization(std::string_view s) {
  if (s == "node-count") return KlNormalization::node_count;
  if (s == "corpus-size") return KlNormalization::corpus_size;
  throw ValidationError("unknown KL normalisation '" + std::string(s) + "'");
}

struct TrainConfig {
  double learning_rate = 0.001;
  std::size_t epochs = 300;
  num::OptimizerKind optimizer = num::OptimizerKind::adam;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  KlNormalization kl_normalization = KlNormalization::node_count;
  VgaeDims dims{};  // vocab filled in from the corpus

  void validate() const {
    if (!(learning_rate > 0.0)) throw ValidationError("VGAE learning rate must be > 0");
    if (epochs == 0) throw ValidationError("VGAE epochs must be positive");
    if (batch_size == 0) throw ValidationError("VGAE batch size must be positive");
    if (dims.hidden1 == 0 || dims.hidden2 == 0 || dims.latent == 0)
      throw ValidationError("VGAE layer widths must be positive");
  }
};

struct EpochStats {
  double total = 0, recon = 0, kl = 0, cls = 0;
};

template <typename T>
struct TrainResult {
  VgaeModel<T> model;
  std::vector<EpochStats> history;
};

/// Mini-batch Adam (or SGD) over shuffled graphs; the loss is averaged within
/// each batch. Fully determined by the seed.
template <typename T>
TrainResult<T> train_vgae(const std::vector<cg::ApiCallGraph>& graphs, std::size_t vocab_size,
                          TrainConfig cfg) {
  cfg.validate();
  if (graphs.empty()) throw ValidationError("train_vgae: empty training corpus");
  cfg.dims.vocab = vocab_size;

  std::vector<GraphInput<T>> inputs;
  inputs.reserve(graphs.size());
  for (const auto& g : graphs) {
    class_index(g.label);
    inputs.push_back(prepare_graph<T>(g, vocab_size));
  }

  TrainResult<T> result;
  result.model = VgaeModel<T>::init(cfg.dims, derive_seed(cfg.seed, "vgae-init"));
  num::Optimizer<T> opt({cfg.optimizer, cfg.learning_rate});
  Rng order_rng(derive_seed(cfg.seed, "vgae-order"));
  Rng noise_rng(derive_seed(cfg.seed, "vgae-noise"));
  const T corpus_norm = static_cast<T>(graphs.size());

  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    order_rng.shuffle(order);
    EpochStats stats;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const T scale = T(1) / static_cast<T>(end - start);
      result.model.params().zero_grad();
      for (std::size_t b = start; b < end; ++b) {
        const auto& in = inputs[order[b]];
        auto noise = standard_normal<T>(in.size(), cfg.dims.latent, noise_rng);
        const T kl_norm = cfg.kl_normalization == KlNormalization::corpus_size ? corpus_norm : T(0);
        const auto f = forward(in, graphs[order[b]].label, result.model, std::move(noise), kl_norm);
        backward(f, result.model, scale);
        stats.total += static_cast<double>(f.parts.total);
        stats.recon += static_cast<double>(f.parts.recon);
        stats.kl += static_cast<double>(f.parts.kl_term);
        stats.cls += static_cast<double>(f.parts.cls);
      }
      opt.step(result.model.params());
    }
    const double inv = 1.0 / static_cast<double>(graphs.size());
    stats.total *= inv;
    stats.recon *= inv;
    stats.kl *= inv;
    stats.cls *= inv;
    result.history.push_back(stats);
    if (!result.model.params().all_finite()) {
      throw NumericError("VGAE parameters became non-finite in epoch " + std::to_string(epoch + 1));
    }
  }
  return result;
}

}  // namespace voltron::vgae
