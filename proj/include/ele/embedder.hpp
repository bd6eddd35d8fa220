#pragma once

// Output feature map: R-GCN layers, sum pooling over nodes, a one-hidden-layer MLP and
// L2 normalization onto the unit sphere. Differentiable in both the parameters and the
// relaxed graph (node and edge label masses).

#include <cstdint>
#include <string>
#include <vector>

#include "ele/autodiff.hpp"
#include "ele/graph.hpp"
#include "ele/tensor_file.hpp"

namespace ele {

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

struct EmbedderConfig {
  int layers = 4;
  int hidden = 128;
  int dim = 128;
  void validate() const;
};

template <typename Scalar>
struct EmbedderParams {
  GraphSpace space;
  EmbedderConfig config;
  /// relation_weights[l][s] is d_in x d_out; d_in = T+1 for the first layer.
  std::vector<std::vector<Matrix<Scalar>>> relation_weights;
  Matrix<Scalar> mlp_hidden_weight;  // hidden x hidden
  Matrix<Scalar> mlp_hidden_bias;    // 1 x hidden
  Matrix<Scalar> mlp_out_weight;     // hidden x dim
  Matrix<Scalar> mlp_out_bias;       // 1 x dim

  /// Glorot-uniform weights, zero biases.
  static EmbedderParams init(const GraphSpace& space, const EmbedderConfig& config, std::uint64_t seed);

  /// Every trainable matrix, in a fixed order.
  std::vector<Matrix<Scalar>*> parameters();
  std::vector<const Matrix<Scalar>*> parameters() const;

  void validate() const;
  TensorFile to_file() const;
  static EmbedderParams from_file(const TensorFile& file);
  void save(const std::string& path) const { to_file().save(path); }
  static EmbedderParams load(const std::string& path) { return from_file(TensorFile::load(path)); }
  /// Hash of the serialized parameters.
  std::uint64_t checksum() const;
};

/// Same-sized relaxed graphs stacked for one pass: nodes is (B*m) x (T+1), edges[s] is (B*m) x m.
template <typename Scalar>
struct GraphBatch {
  int m_max = 0;
  int count = 0;
  Matrix<Scalar> nodes;
  std::vector<Matrix<Scalar>> edges;
};

/// Throws ShapeError when the graphs do not share one m_max and channel layout.
template <typename Scalar>
GraphBatch<Scalar> stack_graphs(const std::vector<RelaxedGraph<Scalar>>& graphs);
template <typename Scalar>
RelaxedGraph<Scalar> unstack_graph(const GraphBatch<Scalar>& batch, int index);

/// Parameters placed on a tape, either tracked (training) or constant (inference, decoding).
template <typename Scalar>
struct BoundEmbedder {
  std::vector<std::vector<ad::Var<Scalar>>> relation_weights;
  ad::Var<Scalar> mlp_hidden_weight, mlp_hidden_bias, mlp_out_weight, mlp_out_bias;
  std::vector<ad::Var<Scalar>> tracked;  // same order as EmbedderParams::parameters()
};

template <typename Scalar>
BoundEmbedder<Scalar> bind(ad::Tape<Scalar>& tape, const EmbedderParams<Scalar>& params, bool track);

/// sigma(sum_s E_s F W_s) over a stack of graphs with `m_max` rows each; sigma = ReLU.
template <typename Scalar>
ad::Var<Scalar> rgcn_layer(const ad::Var<Scalar>& nodes, const std::vector<ad::Var<Scalar>>& edges,
                           const std::vector<ad::Var<Scalar>>& weights, int m_max, bool apply_relu = true);

/// Single-graph convenience form: F (m x d_in), E[s] (m x m), W[s] (d_in x d_out).
template <typename Scalar>
Matrix<Scalar> rgcn_layer(const Matrix<Scalar>& nodes, const std::vector<Matrix<Scalar>>& edges,
                          const std::vector<Matrix<Scalar>>& weights, bool apply_relu = true);

/// B x dim unit rows. `norm_eps` = 0 raises DegenerateEmbeddingError on a zero pre-normalization row.
template <typename Scalar>
ad::Var<Scalar> embed_vars(const BoundEmbedder<Scalar>& model, const ad::Var<Scalar>& nodes,
                           const std::vector<ad::Var<Scalar>>& edges, int m_max, Scalar norm_eps = 0);

template <typename Scalar>
Vector<Scalar> embed(const RelaxedGraph<Scalar>& graph, const EmbedderParams<Scalar>& params);

/// Row b is the embedding of graphs[b].
template <typename Scalar>
Matrix<Scalar> embed_batch(const std::vector<RelaxedGraph<Scalar>>& graphs, const EmbedderParams<Scalar>& params);

/// Embeds discrete graphs in chunks of `chunk` graphs.
template <typename Scalar>
Matrix<Scalar> embed_padded(const std::vector<PaddedGraph>& graphs, const EmbedderParams<Scalar>& params,
                            int chunk = 256);

}  // namespace ele
