#include "ele/graph.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <string>

#include "ele/errors.hpp"

namespace ele {

namespace {

int lookup(const std::vector<std::string>& names, std::string_view name, const char* kind) {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) {
    throw ValidationError(std::string("unknown ") + kind + " label '" + std::string(name) + "'");
  }
  return static_cast<int>(it - names.begin());
}

void require_unique(const std::vector<std::string>& names, const char* kind) {
  std::set<std::string> seen(names.begin(), names.end());
  if (seen.size() != names.size()) {
    throw ValidationError(std::string(kind) + " labels must be unique");
  }
}

template <typename Derived>
int argmax_lowest(const Eigen::DenseBase<Derived>& v) {
  int best = 0;
  for (int k = 1; k < v.size(); ++k) {
    if (v(k) > v(best)) best = k;
  }
  return best;
}

}  // namespace

int LabelAlphabets::node_id(std::string_view name) const {
  return lookup(node_labels, name, "node");
}

int LabelAlphabets::edge_id(std::string_view name) const {
  return lookup(edge_labels, name, "edge");
}

void LabelAlphabets::validate() const {
  if (node_labels.empty()) throw ValidationError("node alphabet must be non-empty");
  if (edge_labels.empty()) throw ValidationError("edge alphabet must contain the no-edge label");
  require_unique(node_labels, "node");
  require_unique(edge_labels, "edge");
  if (std::find(node_labels.begin(), node_labels.end(), virtual_label) != node_labels.end()) {
    throw ValidationError("virtual label collides with a node label");
  }
}

int VariableGraph::edge_label(int u, int v) const {
  if (u > v) std::swap(u, v);
  auto it = std::lower_bound(edges.begin(), edges.end(), LabeledEdge{u, v, 0},
                             [](const LabeledEdge& a, const LabeledEdge& b) {
                               return std::tie(a.u, a.v) < std::tie(b.u, b.v);
                             });
  if (it != edges.end() && it->u == u && it->v == v) return it->label;
  return 0;
}

int PaddedGraph::num_real() const {
  return static_cast<int>(std::count_if(nodes.begin(), nodes.end(),
                                        [&](int l) { return l != space.virtual_id(); }));
}

void PaddedGraph::validate() const {
  const int m = space.m_max;
  if (m <= 0) throw ValidationError("m_max must be positive");
  if (static_cast<int>(nodes.size()) != m) throw ValidationError("node list length != m_max");
  if (edges.rows() != m || edges.cols() != m) throw ValidationError("edge matrix is not m_max x m_max");
  for (int i = 0; i < m; ++i) {
    if (nodes[i] < 0 || nodes[i] > space.virtual_id()) {
      throw ValidationError("node label id out of range at node " + std::to_string(i));
    }
  }
  for (int i = 0; i < m; ++i) {
    if (edges(i, i) != 0) throw ValidationError("diagonal must be no-edge at node " + std::to_string(i));
    for (int j = 0; j < m; ++j) {
      const int e = edges(i, j);
      if (e < 0 || e >= space.edge_labels) {
        throw ValidationError("edge label id out of range at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
      if (e != edges(j, i)) {
        throw ValidationError("edge matrix not symmetric at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
      if (e != 0 && (nodes[i] == space.virtual_id() || nodes[j] == space.virtual_id())) {
        throw ValidationError("edge incident to virtual node at (" + std::to_string(i) + ", " +
                              std::to_string(j) + ")");
      }
    }
  }
}

template <typename Scalar>
void RelaxedGraph<Scalar>::validate(double tol) const {
  const Eigen::Index m = nodes.rows();
  if (edges.empty()) throw ValidationError("relaxed graph has no edge channels");
  for (const auto& e : edges) {
    if (e.rows() != m || e.cols() != m) throw ValidationError("edge channel is not m_max x m_max");
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (nodes.row(i).minCoeff() < -tol) throw ValidationError("negative node mass at row " + std::to_string(i));
    if (std::abs(static_cast<double>(nodes.row(i).sum()) - 1.0) > tol) {
      throw ValidationError("node row " + std::to_string(i) + " does not sum to 1");
    }
    for (Eigen::Index j = 0; j < m; ++j) {
      double total = 0.0;
      for (const auto& e : edges) {
        if (e(i, j) < -tol) throw ValidationError("negative edge mass");
        if (std::abs(static_cast<double>(e(i, j) - e(j, i))) > tol) {
          throw ValidationError("edge fibers not symmetric");
        }
        total += static_cast<double>(e(i, j));
      }
      if (std::abs(total - 1.0) > tol) throw ValidationError("edge fiber does not sum to 1");
    }
  }
}

PaddedGraph pad(const std::vector<int>& nodes, const std::vector<LabeledEdge>& edges,
                const GraphSpace& space) {
  const int n = static_cast<int>(nodes.size());
  if (n > space.m_max) {
    throw CapacityError("graph has " + std::to_string(n) + " nodes but m_max is " +
                        std::to_string(space.m_max));
  }
  PaddedGraph g;
  g.space = space;
  g.nodes.assign(space.m_max, space.virtual_id());
  for (int i = 0; i < n; ++i) {
    if (nodes[i] < 0 || nodes[i] >= space.node_labels) {
      throw ValidationError("node label id out of range at node " + std::to_string(i));
    }
    g.nodes[i] = nodes[i];
  }
  g.edges = Eigen::MatrixXi::Zero(space.m_max, space.m_max);
  Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(space.m_max, space.m_max);
  for (const auto& e : edges) {
    if (e.u < 0 || e.u >= n || e.v < 0 || e.v >= n) throw ValidationError("edge endpoint out of range");
    if (e.u == e.v) throw ValidationError("self loops are not allowed");
    if (e.label < 0 || e.label >= space.edge_labels) throw ValidationError("edge label id out of range");
    if (seen(e.u, e.v) && g.edges(e.u, e.v) != e.label) {
      throw ValidationError("conflicting labels for edge (" + std::to_string(e.u) + ", " +
                            std::to_string(e.v) + ")");
    }
    seen(e.u, e.v) = seen(e.v, e.u) = 1;
    g.edges(e.u, e.v) = g.edges(e.v, e.u) = e.label;
  }
  return g;
}

PaddedGraph pad(const VariableGraph& graph, const GraphSpace& space) {
  return pad(graph.nodes, graph.edges, space);
}

VariableGraph strip(const PaddedGraph& graph) {
  VariableGraph out;
  std::vector<int> index(graph.nodes.size(), -1);
  for (std::size_t i = 0; i < graph.nodes.size(); ++i) {
    if (graph.nodes[i] == graph.space.virtual_id()) continue;
    index[i] = out.num_nodes();
    out.nodes.push_back(graph.nodes[i]);
  }
  for (int i = 0; i < graph.space.m_max; ++i) {
    for (int j = i + 1; j < graph.space.m_max; ++j) {
      if (index[i] < 0 || index[j] < 0 || graph.edges(i, j) == 0) continue;
      out.edges.push_back({index[i], index[j], graph.edges(i, j)});
    }
  }
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

template <typename Scalar>
RelaxedGraph<Scalar> relax(const PaddedGraph& graph) {
  graph.validate();
  const int m = graph.space.m_max;
  RelaxedGraph<Scalar> out;
  out.nodes = Matrix<Scalar>::Zero(m, graph.space.node_channels());
  for (int i = 0; i < m; ++i) out.nodes(i, graph.nodes[i]) = Scalar(1);
  out.edges.assign(graph.space.edge_labels, Matrix<Scalar>::Zero(m, m));
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) out.edges[graph.edges(i, j)](i, j) = Scalar(1);
  }
  return out;
}

template <typename Scalar>
PaddedGraph round_to_padded(const RelaxedGraph<Scalar>& graph, int node_labels) {
  const int m = graph.m_max();
  const int S = graph.edge_channels();
  PaddedGraph out;
  out.space = GraphSpace{m, node_labels, S};
  out.nodes.resize(m);
  for (int i = 0; i < m; ++i) out.nodes[i] = argmax_lowest(graph.nodes.row(i));
  out.edges = Eigen::MatrixXi::Zero(m, m);
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> fiber(S);
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      if (out.nodes[i] == node_labels || out.nodes[j] == node_labels) continue;
      for (int s = 0; s < S; ++s) fiber(s) = graph.edges[s](i, j);
      out.edges(i, j) = out.edges(j, i) = argmax_lowest(fiber);
    }
  }
  return out;
}

template <typename Scalar>
VariableGraph unrelax(const RelaxedGraph<Scalar>& graph) {
  graph.validate(1e-6);
  return strip(round_to_padded(graph, graph.node_channels() - 1));
}

PaddedGraph permute(const PaddedGraph& graph, const std::vector<int>& perm) {
  PaddedGraph out = graph;
  const int m = graph.space.m_max;
  for (int i = 0; i < m; ++i) {
    out.nodes[i] = graph.nodes[perm[i]];
    for (int j = 0; j < m; ++j) out.edges(i, j) = graph.edges(perm[i], perm[j]);
  }
  return out;
}

template <typename Scalar>
RelaxedGraph<Scalar> permute(const RelaxedGraph<Scalar>& graph, const std::vector<int>& perm) {
  const int m = graph.m_max();
  Eigen::PermutationMatrix<Eigen::Dynamic> P(m);
  for (int i = 0; i < m; ++i) P.indices()[i] = perm[i];
  // (P^T X)(i, :) = X(perm[i], :)
  RelaxedGraph<Scalar> out;
  out.nodes = P.transpose() * graph.nodes;
  for (const auto& e : graph.edges) out.edges.push_back(P.transpose() * e * P);
  return out;
}

template struct RelaxedGraph<float>;
template struct RelaxedGraph<double>;
template RelaxedGraph<float> relax<float>(const PaddedGraph&);
template RelaxedGraph<double> relax<double>(const PaddedGraph&);
template VariableGraph unrelax<float>(const RelaxedGraph<float>&);
template VariableGraph unrelax<double>(const RelaxedGraph<double>&);
template PaddedGraph round_to_padded<float>(const RelaxedGraph<float>&, int);
template PaddedGraph round_to_padded<double>(const RelaxedGraph<double>&, int);
template RelaxedGraph<float> permute<float>(const RelaxedGraph<float>&, const std::vector<int>&);
template RelaxedGraph<double> permute<double>(const RelaxedGraph<double>&, const std::vector<int>&);

}  // namespace ele
