#include "ele/contrastive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ele/errors.hpp"
#include "ele/optim.hpp"

namespace ele {

void ContrastiveConfig::validate() const {
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
  if (!(drop_rate >= 0 && drop_rate < 1)) throw ConfigError("drop rate must lie in [0, 1)");
  if (batch_size < 2) throw ConfigError("contrastive batch size must be at least 2");
  if (learning_rate < 0) throw ConfigError("learning rate must be non-negative");
  if (max_steps < 0 || pretrain_steps < 0) throw ConfigError("step counts must be non-negative");
  if (patience < 1 || eval_every < 1) throw ConfigError("patience and eval interval must be positive");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("validation fraction must lie in [0, 1)");
}

PaddedGraph node_drop_augment(const PaddedGraph& graph, double rate, std::mt19937_64& rng) {
  graph.validate();
  if (!(rate >= 0 && rate < 1)) throw ConfigError("drop rate must lie in [0, 1)");
  std::vector<int> real;
  for (int i = 0; i < graph.space.m_max; ++i) {
    if (graph.nodes[i] != graph.space.virtual_id()) real.push_back(i);
  }
  if (real.empty()) throw ValidationError("cannot augment a graph without real nodes");
  const int n = static_cast<int>(real.size());
  const int drop = std::min(n - 1, static_cast<int>(std::ceil(rate * n - 1e-9)));
  PaddedGraph out = graph;
  for (int k = 0; k < drop; ++k) {
    std::uniform_int_distribution<int> pick(k, n - 1);
    std::swap(real[k], real[pick(rng)]);
    const int victim = real[k];
    out.nodes[victim] = graph.space.virtual_id();
    out.edges.row(victim).setZero();
    out.edges.col(victim).setZero();
  }
  return out;
}

namespace {

template <typename Scalar>
void require_unit_rows(const ad::Var<Scalar>& v, const char* what) {
  if (!v.tape()->checked()) return;
  auto norms = v.value().rowwise().norm();
  if (((norms.array() - Scalar(1)).abs() > Scalar(1e-5)).any()) {
    throw ContractError(std::string(what) + ": inputs must be unit vectors");
  }
}

template <typename Scalar>
ad::Var<Scalar> score_gaps(const ad::Var<Scalar>& z, const ad::Var<Scalar>& positive,
                           const ad::Var<Scalar>& negatives) {
  if (z.rows() != 1 || positive.rows() != 1 || z.cols() != positive.cols() || negatives.cols() != z.cols()) {
    throw ShapeError("contrastive loss: anchor and positive must be 1 x d, negatives K x d");
  }
  if (negatives.rows() < 1) throw ConfigError("contrastive loss needs at least one negative");
  require_unit_rows(z, "contrastive loss");
  require_unit_rows(positive, "contrastive loss");
  require_unit_rows(negatives, "contrastive loss");
  auto& tape = *z.tape();
  auto pos = ad::sum(ad::mul(z, positive));
  auto neg = ad::matmul(negatives, ad::transpose(z));
  auto ones = tape.constant(Matrix<Scalar>::Ones(negatives.rows(), 1));
  return ad::sub(neg, ad::matmul(ones, pos));
}

}  // namespace

template <typename Scalar>
ad::Var<Scalar> generic_contrastive_loss(const ad::Var<Scalar>& z, const ad::Var<Scalar>& positive,
                                         const ad::Var<Scalar>& negatives, const ScalarFn<Scalar>& outer,
                                         const ScalarFn<Scalar>& inner) {
  return outer(ad::sum(inner(score_gaps(z, positive, negatives))));
}

template <typename Scalar>
ad::Var<Scalar> infonce_loss(const ad::Var<Scalar>& z, const ad::Var<Scalar>& positive,
                             const ad::Var<Scalar>& negatives, double temperature, double epsilon) {
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
  const auto tau = static_cast<Scalar>(temperature);
  auto terms = ad::exp(ad::scale(score_gaps(z, positive, negatives), Scalar(1) / tau));
  return ad::scale(ad::log(ad::add_scalar(ad::sum(terms), static_cast<Scalar>(epsilon))), tau);
}

template <typename Scalar>
ad::Var<Scalar> batch_infonce_loss(const ad::Var<Scalar>& anchors, const ad::Var<Scalar>& positives,
                                   double temperature, double epsilon) {
  if (!(temperature > 0)) throw ConfigError("temperature must be positive");
  if (!(epsilon > 0)) throw ConfigError("epsilon must be positive");
  const Eigen::Index B = anchors.rows();
  if (B < 2 || positives.rows() != B || positives.cols() != anchors.cols()) {
    throw ShapeError("batch_infonce_loss: need matching B x d anchors and positives with B >= 2");
  }
  auto& tape = *anchors.tape();
  const auto tau = static_cast<Scalar>(temperature);
  auto scores = ad::matmul(anchors, ad::transpose(positives));       // B x B, <z_i, z_k^+>
  auto pos = ad::sum_rows(ad::mul(anchors, positives));              // B x 1, <z_i, z_i^+>
  auto gaps = ad::sub(scores, ad::matmul(pos, tape.constant(Matrix<Scalar>::Ones(1, B))));
  Matrix<Scalar> off_diagonal = Matrix<Scalar>::Ones(B, B);
  off_diagonal.diagonal().setZero();
  auto terms = ad::mul(ad::exp(ad::scale(gaps, Scalar(1) / tau)), tape.constant(std::move(off_diagonal)));
  auto per_anchor = ad::scale(ad::log(ad::add_scalar(ad::sum_rows(terms), static_cast<Scalar>(epsilon))), tau);
  return ad::mean(per_anchor);
}

template <typename Scalar>
std::vector<ContrastiveTuple<Scalar>> build_batch_tuples(const std::vector<PaddedGraph>& batch, double rate,
                                                        std::mt19937_64& rng) {
  if (batch.size() < 2) throw ConfigError("a contrastive batch needs at least 2 graphs");
  std::vector<RelaxedGraph<Scalar>> anchors, augmented;
  for (const auto& g : batch) {
    anchors.push_back(relax<Scalar>(g));
    augmented.push_back(relax<Scalar>(node_drop_augment(g, rate, rng)));
  }
  std::vector<ContrastiveTuple<Scalar>> out;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    ContrastiveTuple<Scalar> t{anchors[i], augmented[i], {}};
    for (std::size_t k = 0; k < batch.size(); ++k) {
      if (k != i) t.negatives.push_back(augmented[k]);
    }
    out.push_back(std::move(t));
  }
  return out;
}

namespace {

/// Anchors and their augmentations stacked into one 2B-graph batch.
template <typename Scalar>
GraphBatch<Scalar> anchor_positive_batch(const std::vector<PaddedGraph>& graphs, double rate,
                                         std::mt19937_64& rng) {
  std::vector<RelaxedGraph<Scalar>> relaxed;
  relaxed.reserve(graphs.size() * 2);
  for (const auto& g : graphs) relaxed.push_back(relax<Scalar>(g));
  for (const auto& g : graphs) relaxed.push_back(relax<Scalar>(node_drop_augment(g, rate, rng)));
  return stack_graphs(relaxed);
}

template <typename Scalar>
struct LossTape {
  std::unique_ptr<ad::Tape<Scalar>> tape;
  BoundEmbedder<Scalar> model;
  ad::Var<Scalar> loss;
};

template <typename Scalar>
LossTape<Scalar> batch_loss(const GraphBatch<Scalar>& batch, const EmbedderParams<Scalar>& params,
                            const ContrastiveConfig& config, bool track) {
  LossTape<Scalar> out;
  out.tape = std::make_unique<ad::Tape<Scalar>>(false);
  auto& tape = *out.tape;
  out.model = bind(tape, params, track);
  std::vector<ad::Var<Scalar>> edges;
  for (const auto& e : batch.edges) edges.push_back(tape.constant(e));
  auto z = embed_vars(out.model, tape.constant(batch.nodes), edges, batch.m_max, Scalar(1e-12));
  const int B = batch.count / 2;
  std::vector<int> first(B), second(B);
  std::iota(first.begin(), first.end(), 0);
  std::iota(second.begin(), second.end(), B);
  auto anchors = ad::gather_rows(z, first);
  auto positives = ad::gather_rows(z, second);
  out.loss = batch_infonce_loss(anchors, positives, config.temperature, config.epsilon);
  return out;
}

/// Splits `graphs` into chunks of at most batch_size, folding a trailing singleton into
/// the previous chunk.
std::vector<std::vector<PaddedGraph>> chunk_batches(const std::vector<PaddedGraph>& graphs, int batch_size) {
  std::vector<std::vector<PaddedGraph>> chunks;
  for (std::size_t start = 0; start < graphs.size(); start += batch_size) {
    const std::size_t end = std::min(graphs.size(), start + static_cast<std::size_t>(batch_size));
    chunks.emplace_back(graphs.begin() + start, graphs.begin() + end);
  }
  if (chunks.size() > 1 && chunks.back().size() < 2) {
    auto tail = std::move(chunks.back());
    chunks.pop_back();
    chunks.back().insert(chunks.back().end(), tail.begin(), tail.end());
  }
  return chunks;
}

template <typename Scalar>
EmbedderParams<Scalar> run_loop(const std::vector<PaddedGraph>& train, const std::vector<PaddedGraph>& val,
                                const ContrastiveConfig& config, EmbedderParams<Scalar> params, long steps,
                                bool early_stop, std::vector<ContrastiveMetrics>* log) {
  if (train.size() < 2) throw ConfigError("contrastive training needs at least 2 graphs");
  std::mt19937_64 rng(config.seed);
  const std::uint64_t val_seed = config.seed ^ 0x9e3779b97f4a7c15ULL;
  const int batch_size = std::min<int>(config.batch_size, static_cast<int>(train.size()));
  const bool has_val = val.size() >= 2;

  Adam<Scalar> adam(params.parameters(), AdamConfig{config.learning_rate});
  EmbedderParams<Scalar> best = params;
  double best_val = std::numeric_limits<double>::infinity();
  int stale = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  double running = 0.0;
  long running_count = 0;
  auto evaluate = [&](long step, double train_loss) {
    ContrastiveMetrics row{step, train_loss, std::numeric_limits<double>::quiet_NaN()};
    if (has_val) row.val_loss = contrastive_loss(val, params, config, val_seed);
    if (log) log->push_back(row);
    return row;
  };

  for (long step = 0; step < steps; ++step) {
    std::vector<PaddedGraph> batch;
    for (int b = 0; b < batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(train[order[cursor++]]);
    }
    auto stacked = anchor_positive_batch<Scalar>(batch, config.drop_rate, rng);
    auto lt = batch_loss(stacked, params, config, true);
    const double loss = static_cast<double>(lt.loss.value()(0, 0));
    if (!std::isfinite(loss)) throw TrainingError("contrastive loss became non-finite", step);
    if (step == 0) {
      auto row = evaluate(0, loss);
      if (early_stop && has_val) best_val = row.val_loss;
    }
    auto grads = lt.tape->backward(lt.loss);
    std::vector<Matrix<Scalar>> g;
    for (const auto& v : lt.model.tracked) g.push_back(grads.of(v));
    adam.step(g);
    running += loss;
    ++running_count;

    const long done = step + 1;
    if (done % config.eval_every == 0 || done == steps) {
      auto row = evaluate(done, running / static_cast<double>(running_count));
      running = 0.0;
      running_count = 0;
      if (early_stop && has_val) {
        if (!std::isfinite(row.val_loss)) throw TrainingError("validation loss became non-finite", done);
        if (row.val_loss < best_val) {
          best_val = row.val_loss;
          best = params;
          stale = 0;
        } else if (++stale >= config.patience) {
          break;
        }
      }
    }
  }
  if (early_stop && has_val) return best;
  return params;
}

}  // namespace

template <typename Scalar>
double contrastive_loss(const std::vector<PaddedGraph>& graphs, const EmbedderParams<Scalar>& params,
                        const ContrastiveConfig& config, std::uint64_t seed) {
  if (graphs.size() < 2) throw ConfigError("contrastive loss needs at least 2 graphs");
  std::mt19937_64 rng(seed);
  double total = 0.0;
  std::size_t weight = 0;
  for (const auto& chunk : chunk_batches(graphs, config.batch_size)) {
    auto stacked = anchor_positive_batch<Scalar>(chunk, config.drop_rate, rng);
    auto lt = batch_loss(stacked, params, config, false);
    total += static_cast<double>(lt.loss.value()(0, 0)) * static_cast<double>(chunk.size());
    weight += chunk.size();
  }
  return total / static_cast<double>(weight);
}

template <typename Scalar>
EmbedderParams<Scalar> train_contrastive(const std::vector<PaddedGraph>& outputs, const ContrastiveConfig& config,
                                         EmbedderParams<Scalar> init, std::vector<ContrastiveMetrics>* log) {
  config.validate();
  if (outputs.empty()) throw ConfigError("train_contrastive: empty output set");
  std::vector<std::size_t> idx(outputs.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 split_rng(config.seed + 1);
  std::shuffle(idx.begin(), idx.end(), split_rng);
  std::size_t n_val = static_cast<std::size_t>(std::floor(config.val_fraction * static_cast<double>(outputs.size())));
  if (n_val < 2 || outputs.size() - n_val < 2) n_val = 0;
  std::vector<PaddedGraph> train, val;
  for (std::size_t k = 0; k < idx.size(); ++k) (k < n_val ? val : train).push_back(outputs[idx[k]]);
  return run_loop(train, val, config, std::move(init), config.max_steps, true, log);
}

template <typename Scalar>
EmbedderParams<Scalar> pretrain_output(const std::vector<PaddedGraph>& extra_outputs, const ContrastiveConfig& config,
                                       EmbedderParams<Scalar> init, std::vector<ContrastiveMetrics>* log) {
  config.validate();
  if (extra_outputs.empty()) throw ConfigError("pretrain_output: empty auxiliary output set");
  if (config.pretrain_steps == 0) return init;
  for (const auto& g : extra_outputs) {
    if (g.space != init.space) throw ShapeError("pretrain_output: graphs must be padded to the session m_max");
  }
  return run_loop(extra_outputs, {}, config, std::move(init), config.pretrain_steps, false, log);
}

#define ELE_CONTRASTIVE_INSTANTIATE(S)                                                                             \
  template ad::Var<S> generic_contrastive_loss(const ad::Var<S>&, const ad::Var<S>&, const ad::Var<S>&,            \
                                               const ScalarFn<S>&, const ScalarFn<S>&);                            \
  template ad::Var<S> infonce_loss(const ad::Var<S>&, const ad::Var<S>&, const ad::Var<S>&, double, double);       \
  template ad::Var<S> batch_infonce_loss(const ad::Var<S>&, const ad::Var<S>&, double, double);                    \
  template std::vector<ContrastiveTuple<S>> build_batch_tuples(const std::vector<PaddedGraph>&, double,            \
                                                               std::mt19937_64&);                                  \
  template double contrastive_loss(const std::vector<PaddedGraph>&, const EmbedderParams<S>&,                      \
                                   const ContrastiveConfig&, std::uint64_t);                                       \
  template EmbedderParams<S> train_contrastive(const std::vector<PaddedGraph>&, const ContrastiveConfig&,          \
                                               EmbedderParams<S>, std::vector<ContrastiveMetrics>*);               \
  template EmbedderParams<S> pretrain_output(const std::vector<PaddedGraph>&, const ContrastiveConfig&,            \
                                             EmbedderParams<S>, std::vector<ContrastiveMetrics>*);

ELE_CONTRASTIVE_INSTANTIATE(float)
ELE_CONTRASTIVE_INSTANTIATE(double)

}  // namespace ele
