#include "ele/embedder.hpp"

#include <random>
#include <sstream>

#include "ele/errors.hpp"

namespace ele {

void EmbedderConfig::validate() const {
  if (layers < 1) throw ConfigError("embedder needs at least one R-GCN layer");
  if (hidden < 1 || dim < 1) throw ConfigError("embedder widths must be positive");
}

namespace {

template <typename Scalar>
Matrix<Scalar> glorot(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix<Scalar> m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j) {
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(dist(rng));
  }
  return m;
}

template <typename Scalar>
void expect_shape(const Matrix<Scalar>& m, Eigen::Index r, Eigen::Index c, const std::string& what) {
  if (m.rows() != r || m.cols() != c) {
    throw ShapeError(what + ": expected " + std::to_string(r) + "x" + std::to_string(c) + ", got " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
}

}  // namespace

template <typename Scalar>
EmbedderParams<Scalar> EmbedderParams<Scalar>::init(const GraphSpace& space, const EmbedderConfig& config,
                                                    std::uint64_t seed) {
  config.validate();
  if (space.node_labels < 1 || space.edge_labels < 1 || space.m_max < 1) {
    throw ConfigError("embedder graph space must be non-empty");
  }
  std::mt19937_64 rng(seed);
  EmbedderParams p;
  p.space = space;
  p.config = config;
  for (int l = 0; l < config.layers; ++l) {
    const int d_in = l == 0 ? space.node_channels() : config.hidden;
    std::vector<Matrix<Scalar>> layer;
    for (int s = 0; s < space.edge_labels; ++s) layer.push_back(glorot<Scalar>(d_in, config.hidden, rng));
    p.relation_weights.push_back(std::move(layer));
  }
  p.mlp_hidden_weight = glorot<Scalar>(config.hidden, config.hidden, rng);
  p.mlp_hidden_bias = Matrix<Scalar>::Zero(1, config.hidden);
  p.mlp_out_weight = glorot<Scalar>(config.hidden, config.dim, rng);
  p.mlp_out_bias = Matrix<Scalar>::Zero(1, config.dim);
  return p;
}

template <typename Scalar>
std::vector<Matrix<Scalar>*> EmbedderParams<Scalar>::parameters() {
  std::vector<Matrix<Scalar>*> out;
  for (auto& layer : relation_weights) {
    for (auto& w : layer) out.push_back(&w);
  }
  out.push_back(&mlp_hidden_weight);
  out.push_back(&mlp_hidden_bias);
  out.push_back(&mlp_out_weight);
  out.push_back(&mlp_out_bias);
  return out;
}

template <typename Scalar>
std::vector<const Matrix<Scalar>*> EmbedderParams<Scalar>::parameters() const {
  std::vector<const Matrix<Scalar>*> out;
  for (auto* p : const_cast<EmbedderParams*>(this)->parameters()) out.push_back(p);
  return out;
}

template <typename Scalar>
void EmbedderParams<Scalar>::validate() const {
  config.validate();
  if (static_cast<int>(relation_weights.size()) != config.layers) throw ShapeError("embedder layer count mismatch");
  for (int l = 0; l < config.layers; ++l) {
    const int d_in = l == 0 ? space.node_channels() : config.hidden;
    if (static_cast<int>(relation_weights[l].size()) != space.edge_labels) {
      throw ShapeError("embedder relation count mismatch at layer " + std::to_string(l));
    }
    for (const auto& w : relation_weights[l]) expect_shape(w, d_in, config.hidden, "rgcn." + std::to_string(l));
  }
  expect_shape(mlp_hidden_weight, config.hidden, config.hidden, "mlp.hidden.weight");
  expect_shape(mlp_hidden_bias, 1, config.hidden, "mlp.hidden.bias");
  expect_shape(mlp_out_weight, config.hidden, config.dim, "mlp.out.weight");
  expect_shape(mlp_out_bias, 1, config.dim, "mlp.out.bias");
  for (const auto* p : parameters()) {
    if (!p->allFinite()) throw ValidationError("embedder parameters contain non-finite values");
  }
}

template <typename Scalar>
TensorFile EmbedderParams<Scalar>::to_file() const {
  validate();
  TensorFile file;
  file.metadata() = {{"kind", "embedder"},          {"layers", config.layers},
                     {"hidden", config.hidden},     {"dim", config.dim},
                     {"m_max", space.m_max},        {"node_labels", space.node_labels},
                     {"edge_labels", space.edge_labels}};
  for (int l = 0; l < config.layers; ++l) {
    file.put("rgcn." + std::to_string(l) + ".weight", Tensor<Scalar>::from_stack(relation_weights[l]));
  }
  file.put("mlp.hidden.weight", mlp_hidden_weight);
  file.put("mlp.hidden.bias", mlp_hidden_bias);
  file.put("mlp.out.weight", mlp_out_weight);
  file.put("mlp.out.bias", mlp_out_bias);
  return file;
}

template <typename Scalar>
EmbedderParams<Scalar> EmbedderParams<Scalar>::from_file(const TensorFile& file) {
  const auto& meta = file.metadata();
  if (meta.value("kind", "") != "embedder") throw InputError("not an embedder checkpoint");
  EmbedderParams p;
  p.config = EmbedderConfig{meta.at("layers").get<int>(), meta.at("hidden").get<int>(), meta.at("dim").get<int>()};
  p.space = GraphSpace{meta.at("m_max").get<int>(), meta.at("node_labels").get<int>(),
                       meta.at("edge_labels").get<int>()};
  for (int l = 0; l < p.config.layers; ++l) {
    p.relation_weights.push_back(file.get<Scalar>("rgcn." + std::to_string(l) + ".weight").to_stack());
  }
  p.mlp_hidden_weight = file.get<Scalar>("mlp.hidden.weight").to_matrix();
  p.mlp_hidden_bias = file.get<Scalar>("mlp.hidden.bias").to_matrix();
  p.mlp_out_weight = file.get<Scalar>("mlp.out.weight").to_matrix();
  p.mlp_out_bias = file.get<Scalar>("mlp.out.bias").to_matrix();
  p.validate();
  return p;
}

template <typename Scalar>
std::uint64_t EmbedderParams<Scalar>::checksum() const {
  std::ostringstream out;
  to_file().write(out);
  const std::string bytes = out.str();
  return fnv1a(bytes.data(), bytes.size());
}

template <typename Scalar>
GraphBatch<Scalar> stack_graphs(const std::vector<RelaxedGraph<Scalar>>& graphs) {
  if (graphs.empty()) throw ShapeError("stack_graphs: empty batch");
  GraphBatch<Scalar> batch;
  batch.m_max = graphs[0].m_max();
  batch.count = static_cast<int>(graphs.size());
  const int m = batch.m_max;
  const int channels = graphs[0].node_channels();
  const int relations = graphs[0].edge_channels();
  batch.nodes.resize(static_cast<Eigen::Index>(batch.count) * m, channels);
  batch.edges.assign(relations, Matrix<Scalar>(static_cast<Eigen::Index>(batch.count) * m, m));
  for (int b = 0; b < batch.count; ++b) {
    const auto& g = graphs[b];
    if (g.m_max() != m || g.node_channels() != channels || g.edge_channels() != relations) {
      throw ShapeError("stack_graphs: heterogeneous graph shapes in one batch");
    }
    batch.nodes.middleRows(b * m, m) = g.nodes;
    for (int s = 0; s < relations; ++s) batch.edges[s].middleRows(b * m, m) = g.edges[s];
  }
  return batch;
}

template <typename Scalar>
RelaxedGraph<Scalar> unstack_graph(const GraphBatch<Scalar>& batch, int index) {
  RelaxedGraph<Scalar> g;
  const int m = batch.m_max;
  g.nodes = batch.nodes.middleRows(index * m, m);
  for (const auto& e : batch.edges) g.edges.push_back(e.middleRows(index * m, m));
  return g;
}

template <typename Scalar>
BoundEmbedder<Scalar> bind(ad::Tape<Scalar>& tape, const EmbedderParams<Scalar>& params, bool track) {
  auto place = [&](const Matrix<Scalar>& m) {
    auto v = track ? tape.variable(m) : tape.constant(m);
    return v;
  };
  BoundEmbedder<Scalar> model;
  for (const auto& layer : params.relation_weights) {
    std::vector<ad::Var<Scalar>> vars;
    for (const auto& w : layer) {
      vars.push_back(place(w));
      model.tracked.push_back(vars.back());
    }
    model.relation_weights.push_back(std::move(vars));
  }
  model.mlp_hidden_weight = place(params.mlp_hidden_weight);
  model.mlp_hidden_bias = place(params.mlp_hidden_bias);
  model.mlp_out_weight = place(params.mlp_out_weight);
  model.mlp_out_bias = place(params.mlp_out_bias);
  model.tracked.insert(model.tracked.end(),
                       {model.mlp_hidden_weight, model.mlp_hidden_bias, model.mlp_out_weight, model.mlp_out_bias});
  return model;
}

template <typename Scalar>
ad::Var<Scalar> rgcn_layer(const ad::Var<Scalar>& nodes, const std::vector<ad::Var<Scalar>>& edges,
                           const std::vector<ad::Var<Scalar>>& weights, int m_max, bool apply_relu) {
  if (edges.size() != weights.size() || edges.empty()) {
    throw ShapeError("rgcn_layer: " + std::to_string(edges.size()) + " edge channels but " +
                     std::to_string(weights.size()) + " relation weights");
  }
  ad::Var<Scalar> acc;
  for (std::size_t s = 0; s < edges.size(); ++s) {
    auto term = ad::block_matmul(edges[s], ad::matmul(nodes, weights[s]), m_max);
    acc = s == 0 ? term : ad::add(acc, term);
  }
  return apply_relu ? ad::relu(acc) : acc;
}

template <typename Scalar>
Matrix<Scalar> rgcn_layer(const Matrix<Scalar>& nodes, const std::vector<Matrix<Scalar>>& edges,
                          const std::vector<Matrix<Scalar>>& weights, bool apply_relu) {
  ad::Tape<Scalar> tape;
  std::vector<ad::Var<Scalar>> e, w;
  for (const auto& x : edges) e.push_back(tape.constant(x));
  for (const auto& x : weights) w.push_back(tape.constant(x));
  return rgcn_layer(tape.constant(nodes), e, w, static_cast<int>(nodes.rows()), apply_relu).value();
}

template <typename Scalar>
ad::Var<Scalar> embed_vars(const BoundEmbedder<Scalar>& model, const ad::Var<Scalar>& nodes,
                           const std::vector<ad::Var<Scalar>>& edges, int m_max, Scalar norm_eps) {
  ad::Var<Scalar> h = nodes;
  for (const auto& layer : model.relation_weights) h = rgcn_layer(h, edges, layer, m_max);
  auto pooled = ad::segment_sum(h, m_max);
  auto hidden = ad::relu(ad::add_rowvec(ad::matmul(pooled, model.mlp_hidden_weight), model.mlp_hidden_bias));
  auto out = ad::add_rowvec(ad::matmul(hidden, model.mlp_out_weight), model.mlp_out_bias);
  return ad::normalize_rows(out, norm_eps);
}

template <typename Scalar>
Matrix<Scalar> embed_batch(const std::vector<RelaxedGraph<Scalar>>& graphs, const EmbedderParams<Scalar>& params) {
  auto batch = stack_graphs(graphs);
  if (batch.m_max != params.space.m_max || batch.nodes.cols() != params.space.node_channels() ||
      static_cast<int>(batch.edges.size()) != params.space.edge_labels) {
    throw ShapeError("embed: graph shape does not match the embedder's graph space");
  }
  ad::Tape<Scalar> tape(false);
  auto model = bind(tape, params, false);
  std::vector<ad::Var<Scalar>> edges;
  for (const auto& e : batch.edges) edges.push_back(tape.constant(e));
  return embed_vars(model, tape.constant(batch.nodes), edges, batch.m_max).value();
}

template <typename Scalar>
Vector<Scalar> embed(const RelaxedGraph<Scalar>& graph, const EmbedderParams<Scalar>& params) {
  return embed_batch(std::vector<RelaxedGraph<Scalar>>{graph}, params).row(0).transpose();
}

template <typename Scalar>
Matrix<Scalar> embed_padded(const std::vector<PaddedGraph>& graphs, const EmbedderParams<Scalar>& params, int chunk) {
  Matrix<Scalar> out(static_cast<Eigen::Index>(graphs.size()), params.config.dim);
  for (std::size_t start = 0; start < graphs.size(); start += chunk) {
    const std::size_t end = std::min(graphs.size(), start + static_cast<std::size_t>(chunk));
    std::vector<RelaxedGraph<Scalar>> relaxed;
    for (std::size_t i = start; i < end; ++i) relaxed.push_back(relax<Scalar>(graphs[i]));
    out.middleRows(start, end - start) = embed_batch(relaxed, params);
  }
  return out;
}

#define ELE_EMBEDDER_INSTANTIATE(S)                                                                              \
  template struct EmbedderParams<S>;                                                                             \
  template GraphBatch<S> stack_graphs(const std::vector<RelaxedGraph<S>>&);                                      \
  template RelaxedGraph<S> unstack_graph(const GraphBatch<S>&, int);                                             \
  template BoundEmbedder<S> bind(ad::Tape<S>&, const EmbedderParams<S>&, bool);                                  \
  template ad::Var<S> rgcn_layer(const ad::Var<S>&, const std::vector<ad::Var<S>>&,                              \
                                 const std::vector<ad::Var<S>>&, int, bool);                                     \
  template Matrix<S> rgcn_layer(const Matrix<S>&, const std::vector<Matrix<S>>&, const std::vector<Matrix<S>>&, \
                                bool);                                                                           \
  template ad::Var<S> embed_vars(const BoundEmbedder<S>&, const ad::Var<S>&, const std::vector<ad::Var<S>>&, int, \
                                 S);                                                                             \
  template Vector<S> embed(const RelaxedGraph<S>&, const EmbedderParams<S>&);                                    \
  template Matrix<S> embed_batch(const std::vector<RelaxedGraph<S>>&, const EmbedderParams<S>&);                 \
  template Matrix<S> embed_padded(const std::vector<PaddedGraph>&, const EmbedderParams<S>&, int);

ELE_EMBEDDER_INSTANTIATE(float)
ELE_EMBEDDER_INSTANTIATE(double)

}  // namespace ele
