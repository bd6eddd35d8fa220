#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <vector>

#include "ele/autodiff.hpp"
#include "ele/embedder.hpp"
#include "ele/graph.hpp"

namespace ele {

struct ContrastiveConfig {
  double temperature = 0.1;
  double epsilon = 1.0;
  double drop_rate = 0.05;
  int batch_size = 64;
  double learning_rate = 1e-3;
  long max_steps = 5000;
  /// Steps of the pre-training loop on auxiliary outputs.
  long pretrain_steps = 0;
  /// Evaluations without validation improvement before stopping.
  int patience = 10;
  long eval_every = 200;
  double val_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Anchor, its augmentation, and the augmentations of K other graphs.
template <typename Scalar>
struct ContrastiveTuple {
  RelaxedGraph<Scalar> anchor;
  RelaxedGraph<Scalar> positive;
  std::vector<RelaxedGraph<Scalar>> negatives;
};

/// Turns ceil(rate * n_real) uniformly chosen real nodes into virtual nodes (keeping at
/// least one real node) and clears their edges.
PaddedGraph node_drop_augment(const PaddedGraph& graph, double rate, std::mt19937_64& rng);

template <typename Scalar>
using ScalarFn = std::function<ad::Var<Scalar>(const ad::Var<Scalar>&)>;

/// outer(sum_k inner(<z, z_k^-> - <z, z^+>)) for a 1 x d anchor, 1 x d positive and K x d negatives.
template <typename Scalar>
ad::Var<Scalar> generic_contrastive_loss(const ad::Var<Scalar>& z, const ad::Var<Scalar>& positive,
                                         const ad::Var<Scalar>& negatives, const ScalarFn<Scalar>& outer,
                                         const ScalarFn<Scalar>& inner);

/// tau * log(eps + sum_k exp((<z, z_k^-> - <z, z^+>) / tau)).
template <typename Scalar>
ad::Var<Scalar> infonce_loss(const ad::Var<Scalar>& z, const ad::Var<Scalar>& positive,
                             const ad::Var<Scalar>& negatives, double temperature, double epsilon);

/// Mean InfoNCE over a batch where anchor i's negatives are the positives of every other row.
template <typename Scalar>
ad::Var<Scalar> batch_infonce_loss(const ad::Var<Scalar>& anchors, const ad::Var<Scalar>& positives,
                                   double temperature, double epsilon);

/// One tuple per graph: positive = its own augmentation, negatives = the other B-1 augmentations.
template <typename Scalar>
std::vector<ContrastiveTuple<Scalar>> build_batch_tuples(const std::vector<PaddedGraph>& batch, double rate,
                                                        std::mt19937_64& rng);

struct ContrastiveMetrics {
  long step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;  // NaN when there is no validation split
};

/// Mean batch InfoNCE over `graphs`, with augmentations drawn from `seed`.
template <typename Scalar>
double contrastive_loss(const std::vector<PaddedGraph>& graphs, const EmbedderParams<Scalar>& params,
                        const ContrastiveConfig& config, std::uint64_t seed);

/// Adam on mean InfoNCE with early stopping on a held-out split; returns the best
/// parameters by validation loss.
template <typename Scalar>
EmbedderParams<Scalar> train_contrastive(const std::vector<PaddedGraph>& outputs, const ContrastiveConfig& config,
                                         EmbedderParams<Scalar> init,
                                         std::vector<ContrastiveMetrics>* log = nullptr);

/// `config.pretrain_steps` steps of the same loop on auxiliary outputs, no early stopping.
template <typename Scalar>
EmbedderParams<Scalar> pretrain_output(const std::vector<PaddedGraph>& extra_outputs, const ContrastiveConfig& config,
                                       EmbedderParams<Scalar> init,
                                       std::vector<ContrastiveMetrics>* log = nullptr);

}  // namespace ele
