#pragma once

#include <Eigen/Dense>

#include <string>
#include <string_view>
#include <vector>

namespace ele {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using RowVector = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Symbolic node and edge label sets. Edge label 0 is reserved for "no edge";
/// the virtual padding label takes node index T = node_labels.size().
struct LabelAlphabets {
  std::vector<std::string> node_labels;
  std::vector<std::string> edge_labels;
  std::string virtual_label = "*";

  int num_node_labels() const { return static_cast<int>(node_labels.size()); }
  int num_edge_labels() const { return static_cast<int>(edge_labels.size()); }
  int virtual_id() const { return num_node_labels(); }

  int node_id(std::string_view name) const;
  int edge_id(std::string_view name) const;

  void validate() const;
  bool operator==(const LabelAlphabets&) const = default;
};

/// Shape of the padded output space: m_max nodes, T node labels (+ virtual), S edge labels.
struct GraphSpace {
  int m_max = 0;
  int node_labels = 0;
  int edge_labels = 0;

  int virtual_id() const { return node_labels; }
  int node_channels() const { return node_labels + 1; }
  bool operator==(const GraphSpace&) const = default;
};

struct LabeledEdge {
  int u = 0;
  int v = 0;
  int label = 0;
  auto operator<=>(const LabeledEdge&) const = default;
};

/// Unpadded discrete graph: node labels in [0, T) and a sorted edge list with u < v and
/// label in [1, S). This is what evaluation compares.
struct VariableGraph {
  std::vector<int> nodes;
  std::vector<LabeledEdge> edges;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  /// Label of edge (u, v), 0 when absent.
  int edge_label(int u, int v) const;
  bool operator==(const VariableGraph&) const = default;
};

/// Discrete graph with exactly m_max nodes; virtual nodes carry label T and no edges.
struct PaddedGraph {
  GraphSpace space;
  std::vector<int> nodes;
  Eigen::MatrixXi edges;

  int num_real() const;
  /// Throws ValidationError naming the first violated invariant.
  void validate() const;
  bool operator==(const PaddedGraph& other) const {
    return space == other.space && nodes == other.nodes && edges == other.edges;
  }
};

/// Continuous point of the relaxed space: node rows on the simplex of size T+1 and
/// symmetric edge fibers on the simplex of size S. `edges[s](i, j)` is the mass of
/// label s on pair (i, j).
template <typename Scalar>
struct RelaxedGraph {
  Matrix<Scalar> nodes;
  std::vector<Matrix<Scalar>> edges;

  int m_max() const { return static_cast<int>(nodes.rows()); }
  int node_channels() const { return static_cast<int>(nodes.cols()); }
  int edge_channels() const { return static_cast<int>(edges.size()); }

  void validate(double tol = 1e-9) const;
};

/// Pads a real graph to `space.m_max` nodes. Real nodes keep indices [0, n).
PaddedGraph pad(const std::vector<int>& nodes, const std::vector<LabeledEdge>& edges,
                const GraphSpace& space);
PaddedGraph pad(const VariableGraph& graph, const GraphSpace& space);

/// Drops virtual nodes and reindexes the survivors in order.
VariableGraph strip(const PaddedGraph& graph);

/// One-hot encoding of every node and edge label.
template <typename Scalar>
RelaxedGraph<Scalar> relax(const PaddedGraph& graph);

/// Argmax per node row and edge fiber (lowest index wins ties), then deletion of
/// virtual-labelled nodes with their incident edges.
template <typename Scalar>
VariableGraph unrelax(const RelaxedGraph<Scalar>& graph);

/// Argmax rounding that stays in the padded space (virtual nodes kept, their edges cleared).
template <typename Scalar>
PaddedGraph round_to_padded(const RelaxedGraph<Scalar>& graph, int node_labels);

/// Node i of the result is node perm[i] of the input.
PaddedGraph permute(const PaddedGraph& graph, const std::vector<int>& perm);
template <typename Scalar>
RelaxedGraph<Scalar> permute(const RelaxedGraph<Scalar>& graph, const std::vector<int>& perm);

}  // namespace ele
