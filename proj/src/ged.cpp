#include "ele/ged.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <string>

#include "ele/errors.hpp"

namespace ele {

void EditCosts::validate() const {
  for (double c : {node_insertion, node_deletion, node_substitution, edge_insertion, edge_deletion,
                   edge_substitution}) {
    if (!(c >= 0.0)) throw ConfigError("edit costs must be non-negative");
  }
}

namespace {

using Adjacency = std::vector<std::vector<int>>;

Adjacency adjacency(const VariableGraph& g, bool use_labels) {
  const int n = g.num_nodes();
  Adjacency a(n, std::vector<int>(n, 0));
  for (const auto& e : g.edges) {
    if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n || e.u == e.v) {
      throw ValidationError("ged: edge endpoint out of range");
    }
    a[e.u][e.v] = a[e.v][e.u] = use_labels ? e.label : 1;
  }
  return a;
}

// Cheapest way to turn one label multiset into another, ignoring structure.
double multiset_bound(std::vector<int> x, std::vector<int> y, double sub, double ins, double del) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0, common = 0;
  while (i < x.size() && j < y.size()) {
    if (x[i] == y[j]) {
      ++common, ++i, ++j;
    } else if (x[i] < y[j]) {
      ++i;
    } else {
      ++j;
    }
  }
  const std::size_t pairs = std::min(x.size(), y.size());
  const double bound = static_cast<double>(pairs - common) * std::min(sub, ins + del);
  if (x.size() > y.size()) return bound + static_cast<double>(x.size() - y.size()) * del;
  return bound + static_cast<double>(y.size() - x.size()) * ins;
}

class Search {
 public:
  Search(const VariableGraph& a, const VariableGraph& b, const EditCosts& costs)
      : c_(costs),
        l1_(a.nodes),
        l2_(b.nodes),
        a1_(adjacency(a, costs.use_edge_labels)),
        a2_(adjacency(b, costs.use_edge_labels)),
        n1_(a.num_nodes()),
        n2_(b.num_nodes()),
        phi_(n1_, -1),
        used_(n2_, false),
        done_(n1_, false) {
    std::vector<int> degree(n1_, 0);
    for (int u = 0; u < n1_; ++u) {
      for (int v = 0; v < n1_; ++v) degree[u] += a1_[u][v] != 0;
    }
    order_.resize(n1_);
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [&](int x, int y) { return degree[x] > degree[y]; });
  }

  double run() {
    dfs(0, 0.0);
    return best_;
  }

 private:
  double edge_cost(int e1, int e2) const {
    if (e1 == e2) return 0.0;
    if (e1 == 0) return c_.edge_insertion;
    if (e2 == 0) return c_.edge_deletion;
    return c_.edge_substitution;
  }

  double lower_bound(int k) const {
    std::vector<int> nodes1, nodes2, edges1, edges2;
    for (int i = k; i < n1_; ++i) nodes1.push_back(l1_[order_[i]]);
    for (int v = 0; v < n2_; ++v) {
      if (!used_[v]) nodes2.push_back(l2_[v]);
    }
    for (int u = 0; u < n1_; ++u) {
      for (int w = u + 1; w < n1_; ++w) {
        if (a1_[u][w] != 0 && (!done_[u] || !done_[w])) edges1.push_back(a1_[u][w]);
      }
    }
    for (int v = 0; v < n2_; ++v) {
      for (int x = v + 1; x < n2_; ++x) {
        if (a2_[v][x] != 0 && (!used_[v] || !used_[x])) edges2.push_back(a2_[v][x]);
      }
    }
    return multiset_bound(nodes1, nodes2, c_.node_substitution, c_.node_insertion, c_.node_deletion) +
           multiset_bound(edges1, edges2, c_.edge_substitution, c_.edge_insertion, c_.edge_deletion);
  }

  double completion_cost() const {
    double cost = 0.0;
    for (int v = 0; v < n2_; ++v) {
      if (used_[v]) continue;
      cost += c_.node_insertion;
      for (int x = 0; x < n2_; ++x) {
        if (x == v || a2_[v][x] == 0) continue;
        // Count each inserted edge once.
        if (used_[x] || x > v) cost += c_.edge_insertion;
      }
    }
    return cost;
  }

  // Cost of mapping g1 node u to g2 node v (-1 = deletion) given the processed nodes.
  double assignment_cost(int u, int v) const {
    double cost = 0.0;
    if (v < 0) {
      cost += c_.node_deletion;
    } else if (l1_[u] != l2_[v]) {
      cost += c_.node_substitution;
    }
    for (int w = 0; w < n1_; ++w) {
      if (!done_[w]) continue;
      const int e1 = a1_[u][w];
      const int e2 = (v >= 0 && phi_[w] >= 0) ? a2_[v][phi_[w]] : 0;
      cost += edge_cost(e1, e2);
    }
    return cost;
  }

  void dfs(int k, double cost) {
    if (cost >= best_) return;
    if (k == n1_) {
      best_ = std::min(best_, cost + completion_cost());
      return;
    }
    if (cost + lower_bound(k) >= best_) return;
    const int u = order_[k];
    std::vector<std::pair<double, int>> options;
    for (int v = 0; v < n2_; ++v) {
      if (!used_[v]) options.emplace_back(assignment_cost(u, v), v);
    }
    options.emplace_back(assignment_cost(u, -1), -1);
    std::stable_sort(options.begin(), options.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    done_[u] = true;
    for (const auto& [inc, v] : options) {
      phi_[u] = v;
      if (v >= 0) used_[v] = true;
      dfs(k + 1, cost + inc);
      if (v >= 0) used_[v] = false;
    }
    phi_[u] = -1;
    done_[u] = false;
  }

  const EditCosts& c_;
  std::vector<int> l1_, l2_;
  Adjacency a1_, a2_;
  int n1_, n2_;
  std::vector<int> order_;
  std::vector<int> phi_;
  std::vector<bool> used_;
  std::vector<bool> done_;
  double best_ = std::numeric_limits<double>::infinity();
};

}  // namespace

double ged(const VariableGraph& a, const VariableGraph& b, const EditCosts& costs) {
  costs.validate();
  if (a.num_nodes() > kMaxExactGedNodes || b.num_nodes() > kMaxExactGedNodes) {
    throw CapacityError("exact GED supports at most " + std::to_string(kMaxExactGedNodes) +
                        " nodes per graph; larger graphs need an approximate method");
  }
  return Search(a, b, costs).run();
}

}  // namespace ele
