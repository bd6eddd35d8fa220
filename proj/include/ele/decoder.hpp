#pragma once

// Decoding an input embedding back to a graph: argmax over a candidate set, or projected
// gradient descent on the relaxed graph space started from a candidate.

#include <cstdint>
#include <string>
#include <vector>

#include "ele/embedder.hpp"
#include "ele/graph.hpp"
#include "ele/regressor.hpp"

namespace ele {

template <typename Scalar>
struct CandidateIndex {
  std::vector<PaddedGraph> graphs;
  Matrix<Scalar> embeddings;  // one unit row per graph

  static CandidateIndex build(std::vector<PaddedGraph> graphs, const EmbedderParams<Scalar>& embedder);

  std::size_t size() const { return graphs.size(); }
  bool empty() const { return graphs.empty(); }
  /// Rows `rows` of this index, in the given order.
  CandidateIndex subset(const std::vector<std::size_t>& rows) const;
  void validate(double tol = 1e-5) const;
};

template <typename Scalar>
struct Selection {
  std::size_t index = 0;
  Scalar score = 0;
};

/// Argmax inner product; the lowest index wins ties. Throws ContractError on an empty index.
template <typename Scalar>
Selection<Scalar> candidate_select(const Vector<Scalar>& z, const CandidateIndex<Scalar>& index);

/// Row-wise form for a batch of embeddings.
template <typename Scalar>
std::vector<Selection<Scalar>> candidate_select(const Matrix<Scalar>& z, const CandidateIndex<Scalar>& index);

/// Euclidean projection onto the probability simplex (sort-and-threshold).
template <typename Scalar>
Vector<Scalar> project_simplex(const Vector<Scalar>& v);

/// Node rows onto the node simplex; each pair (i, j) onto the edge simplex after
/// averaging the (i, j) and (j, i) fibers; diagonal fibers reset to no-edge.
template <typename Scalar>
RelaxedGraph<Scalar> project_relaxed_graph(const Matrix<Scalar>& nodes, const std::vector<Matrix<Scalar>>& edges);

enum class InitStrategy { BestCandidate, RandomCandidate, Given };

struct PgdConfig {
  double step_size = 1.0;
  long steps = 2000;
  /// Return the iterate with the lowest objective instead of the last one.
  bool track_best = true;
  InitStrategy init = InitStrategy::BestCandidate;
  void validate() const;
};

template <typename Scalar>
struct PgdResult {
  RelaxedGraph<Scalar> graph;
  Scalar objective = 0;          // |psi(graph) - z|^2
  Scalar initial_objective = 0;
  long best_iteration = 0;
  std::vector<Scalar> trace;     // objective of iterates 0..steps when requested
};

/// |psi(y) - z|^2 for a relaxed graph.
template <typename Scalar>
Scalar decode_objective(const Vector<Scalar>& z, const RelaxedGraph<Scalar>& graph,
                        const EmbedderParams<Scalar>& embedder);

/// Projected gradient descent on |psi(y) - z|^2 from `init`. Throws DecodeError with the
/// iteration index when a gradient stops being finite.
template <typename Scalar>
PgdResult<Scalar> pgd_decode(const Vector<Scalar>& z, const EmbedderParams<Scalar>& embedder,
                             const RelaxedGraph<Scalar>& init, const PgdConfig& config, bool keep_trace = false);

/// Independent problems solved together; one forward/backward pass per step for the batch.
template <typename Scalar>
std::vector<PgdResult<Scalar>> pgd_decode_batch(const Matrix<Scalar>& z, const EmbedderParams<Scalar>& embedder,
                                                const std::vector<RelaxedGraph<Scalar>>& inits,
                                                const PgdConfig& config, bool keep_trace = false);

enum class DecodeStrategy { Candidate, PgdRandom, PgdBest };

/// "candidate", "pgd-random", "pgd-best". Throws ConfigError on anything else.
DecodeStrategy parse_strategy(const std::string& name);
std::string strategy_name(DecodeStrategy strategy);

struct DecodeOptions {
  DecodeStrategy strategy = DecodeStrategy::Candidate;
  PgdConfig pgd;
  std::uint64_t seed = 0;
  bool keep_trace = false;
};

template <typename Scalar>
struct Decoded {
  VariableGraph graph;
  Scalar objective = 0;      // surrogate objective of the returned point, before rounding
  std::size_t candidate = 0; // candidate used for selection or initialization
  std::vector<Scalar> trace;
};

/// Decodes every row of `z` (unit input embeddings).
template <typename Scalar>
std::vector<Decoded<Scalar>> decode_embeddings(const Matrix<Scalar>& z, const EmbedderParams<Scalar>& embedder,
                                               const CandidateIndex<Scalar>& index, const DecodeOptions& options);

template <typename Scalar>
std::vector<Decoded<Scalar>> decode(const std::vector<std::string>& inputs, const RegressorParams<Scalar>& regressor,
                                    const EmbedderParams<Scalar>& embedder, const CandidateIndex<Scalar>& index,
                                    const DecodeOptions& options);

}  // namespace ele
