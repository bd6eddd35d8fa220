#include "ele/decoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "ele/errors.hpp"

namespace ele {

template <typename Scalar>
CandidateIndex<Scalar> CandidateIndex<Scalar>::build(std::vector<PaddedGraph> graphs,
                                                     const EmbedderParams<Scalar>& embedder) {
  CandidateIndex index;
  index.embeddings = graphs.empty() ? Matrix<Scalar>(0, embedder.config.dim) : embed_padded(graphs, embedder);
  index.graphs = std::move(graphs);
  return index;
}

template <typename Scalar>
CandidateIndex<Scalar> CandidateIndex<Scalar>::subset(const std::vector<std::size_t>& rows) const {
  CandidateIndex out;
  out.embeddings.resize(static_cast<Eigen::Index>(rows.size()), embeddings.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r] >= graphs.size()) throw ContractError("candidate subset row out of range");
    out.graphs.push_back(graphs[rows[r]]);
    out.embeddings.row(r) = embeddings.row(rows[r]);
  }
  return out;
}

template <typename Scalar>
void CandidateIndex<Scalar>::validate(double tol) const {
  if (embeddings.rows() != static_cast<Eigen::Index>(graphs.size())) {
    throw ShapeError("candidate index: one embedding row per graph required");
  }
  for (Eigen::Index i = 0; i < embeddings.rows(); ++i) {
    if (std::abs(static_cast<double>(embeddings.row(i).norm()) - 1.0) > tol) {
      throw ValidationError("candidate index: embedding row " + std::to_string(i) + " is not unit norm");
    }
  }
}

template <typename Scalar>
std::vector<Selection<Scalar>> candidate_select(const Matrix<Scalar>& z, const CandidateIndex<Scalar>& index) {
  if (index.empty()) throw ContractError("candidate_select: empty candidate index");
  if (z.cols() != index.embeddings.cols()) throw ShapeError("candidate_select: embedding dimension mismatch");
  const Matrix<Scalar> scores = z * index.embeddings.transpose();
  std::vector<Selection<Scalar>> out(z.rows());
  for (Eigen::Index r = 0; r < scores.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index j = 1; j < scores.cols(); ++j) {
      if (scores(r, j) > scores(r, best)) best = j;
    }
    out[r] = {static_cast<std::size_t>(best), scores(r, best)};
  }
  return out;
}

template <typename Scalar>
Selection<Scalar> candidate_select(const Vector<Scalar>& z, const CandidateIndex<Scalar>& index) {
  return candidate_select<Scalar>(Matrix<Scalar>(z.transpose()), index).front();
}

template <typename Scalar>
Vector<Scalar> project_simplex(const Vector<Scalar>& v) {
  const Eigen::Index k = v.size();
  if (k < 1) throw ShapeError("project_simplex: empty vector");
  Vector<Scalar> u = v;
  std::sort(u.data(), u.data() + k, std::greater<Scalar>());
  Scalar cumulative = 0, theta = 0;
  for (Eigen::Index j = 0; j < k; ++j) {
    cumulative += u(j);
    const Scalar t = (cumulative - Scalar(1)) / static_cast<Scalar>(j + 1);
    if (u(j) - t > Scalar(0)) theta = t;
  }
  return (v.array() - theta).cwiseMax(Scalar(0)).matrix();
}

template <typename Scalar>
RelaxedGraph<Scalar> project_relaxed_graph(const Matrix<Scalar>& nodes, const std::vector<Matrix<Scalar>>& edges) {
  const Eigen::Index m = nodes.rows();
  const int S = static_cast<int>(edges.size());
  if (S < 1) throw ShapeError("project_relaxed_graph: no edge channels");
  for (const auto& E : edges) {
    if (E.rows() != m || E.cols() != m) throw ShapeError("project_relaxed_graph: edge channel is not m x m");
  }
  RelaxedGraph<Scalar> out;
  out.nodes.resize(m, nodes.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    out.nodes.row(i) = project_simplex<Scalar>(nodes.row(i).transpose()).transpose();
  }
  out.edges.assign(S, Matrix<Scalar>::Zero(m, m));
  Vector<Scalar> fiber(S);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.edges[0](i, i) = Scalar(1);
    for (Eigen::Index j = i + 1; j < m; ++j) {
      for (int s = 0; s < S; ++s) fiber(s) = (edges[s](i, j) + edges[s](j, i)) / Scalar(2);
      const Vector<Scalar> p = project_simplex<Scalar>(fiber);
      for (int s = 0; s < S; ++s) out.edges[s](i, j) = out.edges[s](j, i) = p(s);
    }
  }
  return out;
}

void PgdConfig::validate() const {
  if (!(step_size >= 0) || !std::isfinite(step_size)) throw ConfigError("PGD step size must be non-negative");
  if (steps < 0) throw ConfigError("PGD step count must be non-negative");
}

namespace {

template <typename Scalar>
struct BatchValue {
  Vector<Scalar> objectives;
  Matrix<Scalar> node_grad;
  std::vector<Matrix<Scalar>> edge_grad;
};

template <typename Scalar>
BatchValue<Scalar> evaluate_batch(const Matrix<Scalar>& z, const EmbedderParams<Scalar>& embedder,
                                  const GraphBatch<Scalar>& batch, bool want_grad) {
  ad::Tape<Scalar> tape(false);
  auto model = bind(tape, embedder, false);
  auto nodes = want_grad ? tape.variable(batch.nodes) : tape.constant(batch.nodes);
  std::vector<ad::Var<Scalar>> edges;
  for (const auto& E : batch.edges) edges.push_back(want_grad ? tape.variable(E) : tape.constant(E));
  auto psi = embed_vars(model, nodes, edges, batch.m_max);
  auto diff = ad::sub(psi, tape.constant(z));
  auto per_graph = ad::sum_rows(ad::mul(diff, diff));
  BatchValue<Scalar> out;
  out.objectives = per_graph.value().col(0);
  if (want_grad) {
    auto grads = tape.backward(ad::sum(per_graph));
    out.node_grad = grads.of(nodes);
    for (const auto& e : edges) out.edge_grad.push_back(grads.of(e));
  }
  return out;
}

template <typename Scalar>
void check_init(const RelaxedGraph<Scalar>& g, const GraphSpace& space) {
  if (g.m_max() != space.m_max || g.node_channels() != space.node_channels() ||
      g.edge_channels() != space.edge_labels) {
    throw ShapeError("pgd_decode: initial graph does not match the embedder's graph space");
  }
  g.validate(1e-6);
}

}  // namespace

template <typename Scalar>
Scalar decode_objective(const Vector<Scalar>& z, const RelaxedGraph<Scalar>& graph,
                        const EmbedderParams<Scalar>& embedder) {
  return (embed(graph, embedder) - z).squaredNorm();
}

template <typename Scalar>
std::vector<PgdResult<Scalar>> pgd_decode_batch(const Matrix<Scalar>& z, const EmbedderParams<Scalar>& embedder,
                                                const std::vector<RelaxedGraph<Scalar>>& inits,
                                                const PgdConfig& config, bool keep_trace) {
  config.validate();
  if (z.rows() != static_cast<Eigen::Index>(inits.size())) throw ShapeError("pgd_decode: one target per init");
  if (inits.empty()) return {};
  if (z.cols() != embedder.config.dim) throw ShapeError("pgd_decode: target dimension mismatch");
  for (const auto& g : inits) check_init(g, embedder.space);

  const int B = static_cast<int>(inits.size());
  const int m = embedder.space.m_max;
  const Scalar eta = static_cast<Scalar>(config.step_size);
  GraphBatch<Scalar> current = stack_graphs(inits);

  Matrix<Scalar> off_diagonal = Matrix<Scalar>::Ones(current.nodes.rows(), m);
  for (int b = 0; b < B; ++b) {
    for (int i = 0; i < m; ++i) off_diagonal(b * m + i, i) = 0;
  }

  std::vector<PgdResult<Scalar>> results(B);
  const long steps = eta == Scalar(0) ? 0 : config.steps;
  for (long t = 0;; ++t) {
    BatchValue<Scalar> value;
    try {
      value = evaluate_batch(z, embedder, current, t < steps);
    } catch (const DegenerateEmbeddingError& e) {
      throw DecodeError(std::string("pgd_decode: ") + e.what(), t);
    }
    for (int b = 0; b < B; ++b) {
      auto& r = results[b];
      const Scalar obj = value.objectives(b);
      if (keep_trace) r.trace.push_back(obj);
      const bool improve = t == 0 || !config.track_best || obj < r.objective;
      if (t == 0) r.initial_objective = obj;
      if (improve) {
        r.objective = obj;
        r.best_iteration = t;
        r.graph = t == 0 ? inits[b] : unstack_graph(current, b);
      }
    }
    if (t == steps) break;

    if (!value.node_grad.allFinite()) throw DecodeError("pgd_decode: non-finite node gradient", t);
    Matrix<Scalar> nodes = current.nodes - eta * value.node_grad;
    std::vector<Matrix<Scalar>> edges(current.edges.size());
    for (std::size_t s = 0; s < edges.size(); ++s) {
      if (!value.edge_grad[s].allFinite()) throw DecodeError("pgd_decode: non-finite edge gradient", t);
      edges[s] = current.edges[s] - eta * value.edge_grad[s].cwiseProduct(off_diagonal);
    }
    for (int b = 0; b < B; ++b) {
      std::vector<Matrix<Scalar>> fibers;
      for (const auto& E : edges) fibers.push_back(E.middleRows(b * m, m));
      RelaxedGraph<Scalar> p = project_relaxed_graph<Scalar>(nodes.middleRows(b * m, m), fibers);
      current.nodes.middleRows(b * m, m) = p.nodes;
      for (std::size_t s = 0; s < edges.size(); ++s) current.edges[s].middleRows(b * m, m) = p.edges[s];
    }
  }
  return results;
}

template <typename Scalar>
PgdResult<Scalar> pgd_decode(const Vector<Scalar>& z, const EmbedderParams<Scalar>& embedder,
                             const RelaxedGraph<Scalar>& init, const PgdConfig& config, bool keep_trace) {
  return pgd_decode_batch<Scalar>(Matrix<Scalar>(z.transpose()), embedder, {init}, config, keep_trace).front();
}

DecodeStrategy parse_strategy(const std::string& name) {
  if (name == "candidate") return DecodeStrategy::Candidate;
  if (name == "pgd-random") return DecodeStrategy::PgdRandom;
  if (name == "pgd-best") return DecodeStrategy::PgdBest;
  throw ConfigError("unknown decoding strategy '" + name + "'");
}

std::string strategy_name(DecodeStrategy strategy) {
  switch (strategy) {
    case DecodeStrategy::Candidate: return "candidate";
    case DecodeStrategy::PgdRandom: return "pgd-random";
    case DecodeStrategy::PgdBest: return "pgd-best";
  }
  return "unknown";
}

template <typename Scalar>
std::vector<Decoded<Scalar>> decode_embeddings(const Matrix<Scalar>& z, const EmbedderParams<Scalar>& embedder,
                                               const CandidateIndex<Scalar>& index, const DecodeOptions& options) {
  if (index.empty()) throw ContractError("decode: empty candidate index");
  const auto n = static_cast<std::size_t>(z.rows());
  std::vector<std::size_t> chosen(n);
  if (options.strategy == DecodeStrategy::PgdRandom) {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, index.size() - 1);
    for (auto& c : chosen) c = pick(rng);
  } else {
    auto sel = candidate_select(z, index);
    for (std::size_t i = 0; i < n; ++i) chosen[i] = sel[i].index;
  }
  std::vector<RelaxedGraph<Scalar>> inits;
  inits.reserve(n);
  for (auto c : chosen) inits.push_back(relax<Scalar>(index.graphs[c]));

  // Candidate selection goes through the same batched objective so strategies compare exactly.
  PgdConfig pgd = options.pgd;
  if (options.strategy == DecodeStrategy::Candidate) pgd.steps = 0;
  auto results = pgd_decode_batch(z, embedder, inits, pgd, options.keep_trace);

  std::vector<Decoded<Scalar>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].graph = unrelax(results[i].graph);
    out[i].objective = results[i].objective;
    out[i].candidate = chosen[i];
    out[i].trace = std::move(results[i].trace);
  }
  return out;
}

template <typename Scalar>
std::vector<Decoded<Scalar>> decode(const std::vector<std::string>& inputs, const RegressorParams<Scalar>& regressor,
                                    const EmbedderParams<Scalar>& embedder, const CandidateIndex<Scalar>& index,
                                    const DecodeOptions& options) {
  if (inputs.empty()) return {};
  return decode_embeddings(regress_batch(inputs, regressor), embedder, index, options);
}

#define ELE_DECODER_INSTANTIATE(S)                                                                                \
  template struct CandidateIndex<S>;                                                                              \
  template Selection<S> candidate_select(const Vector<S>&, const CandidateIndex<S>&);                             \
  template std::vector<Selection<S>> candidate_select(const Matrix<S>&, const CandidateIndex<S>&);                 \
  template Vector<S> project_simplex(const Vector<S>&);                                                           \
  template RelaxedGraph<S> project_relaxed_graph(const Matrix<S>&, const std::vector<Matrix<S>>&);                \
  template S decode_objective(const Vector<S>&, const RelaxedGraph<S>&, const EmbedderParams<S>&);                \
  template PgdResult<S> pgd_decode(const Vector<S>&, const EmbedderParams<S>&, const RelaxedGraph<S>&,             \
                                   const PgdConfig&, bool);                                                       \
  template std::vector<PgdResult<S>> pgd_decode_batch(const Matrix<S>&, const EmbedderParams<S>&,                 \
                                                      const std::vector<RelaxedGraph<S>>&, const PgdConfig&, bool); \
  template std::vector<Decoded<S>> decode_embeddings(const Matrix<S>&, const EmbedderParams<S>&,                  \
                                                     const CandidateIndex<S>&, const DecodeOptions&);             \
  template std::vector<Decoded<S>> decode(const std::vector<std::string>&, const RegressorParams<S>&,             \
                                          const EmbedderParams<S>&, const CandidateIndex<S>&, const DecodeOptions&);

ELE_DECODER_INSTANTIATE(float)
ELE_DECODER_INSTANTIATE(double)

}  // namespace ele
