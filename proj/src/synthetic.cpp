#include "ele/synthetic.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <random>
#include <set>

#include "ele/errors.hpp"

namespace ele {
namespace {

constexpr std::string_view kEdgeSymbols = "-=#$%&~^";

using Adjacency = std::vector<std::vector<int>>;

Adjacency adjacency(const VariableGraph& g) {
  const int n = g.num_nodes();
  Adjacency a(n, std::vector<int>(n, 0));
  for (const auto& e : g.edges) {
    if (e.u < 0 || e.v < 0 || e.u >= n || e.v >= n || e.u == e.v || e.label < 1) {
      throw ValidationError("serialize_graph: invalid edge");
    }
    a[e.u][e.v] = a[e.v][e.u] = e.label;
  }
  return a;
}

char single_char(const std::string& label, const char* what) {
  if (label.size() != 1) throw InputError(std::string(what) + " label '" + label + "' is not a single character");
  return label[0];
}

// Visit order plus the serialized text, from node 0.
std::pair<std::vector<int>, std::string> traverse(const VariableGraph& g, const LabelAlphabets* alphabets) {
  const int n = g.num_nodes();
  if (n == 0) return {{}, ""};
  if (n > 10) throw CapacityError("serialize_graph: at most 10 nodes");
  const Adjacency a = adjacency(g);
  std::vector<int> index(n, -1), order;
  auto node_char = [&](int u) {
    return alphabets ? single_char(alphabets->node_labels.at(g.nodes[u]), "node") : '?';
  };
  auto edge_char = [&](int label) {
    return alphabets ? single_char(alphabets->edge_labels.at(label), "edge") : '?';
  };

  std::function<std::string(int, int)> visit = [&](int u, int parent) {
    index[u] = static_cast<int>(order.size());
    order.push_back(u);
    std::string out(1, node_char(u));
    std::vector<int> rings;
    for (int w = 0; w < n; ++w) {
      if (w != parent && a[u][w] != 0 && index[w] >= 0) rings.push_back(w);
    }
    std::sort(rings.begin(), rings.end(), [&](int x, int y) { return index[x] < index[y]; });
    for (int w : rings) {
      out += edge_char(a[u][w]);
      out += static_cast<char>('0' + index[w]);
    }
    std::vector<std::string> children;
    for (int w = 0; w < n; ++w) {
      if (a[u][w] != 0 && index[w] < 0) children.push_back(std::string(1, edge_char(a[u][w])) + visit(w, u));
    }
    for (std::size_t c = 0; c < children.size(); ++c) {
      out += c + 1 < children.size() ? "(" + children[c] + ")" : children[c];
    }
    return out;
  };
  std::string text = visit(0, -1);
  if (static_cast<int>(order.size()) != n) throw ValidationError("serialize_graph: graph is not connected");
  return {order, text};
}

class Parser {
 public:
  Parser(const std::string& text, const LabelAlphabets& alphabets) : text_(text), alphabets_(alphabets) {}

  VariableGraph run() {
    if (!text_.empty()) {
      node(-1, 0);
      if (pos_ != text_.size()) fail("trailing characters");
    }
    std::sort(graph_.edges.begin(), graph_.edges.end());
    return graph_;
  }

 private:
  [[noreturn]] void fail(const std::string& what) const {
    throw InputError("parse_graph: " + what + " at position " + std::to_string(pos_) + " in '" + text_ + "'");
  }

  bool at_end() const { return pos_ >= text_.size(); }

  int edge_at(std::size_t p) const {
    if (p >= text_.size()) return -1;
    for (int s = 1; s < alphabets_.num_edge_labels(); ++s) {
      if (alphabets_.edge_labels[s] == std::string(1, text_[p])) return s;
    }
    return -1;
  }

  void add_edge(int u, int v, int label) {
    if (u == v) fail("self loop");
    LabeledEdge e{std::min(u, v), std::max(u, v), label};
    for (const auto& f : graph_.edges) {
      if (f.u == e.u && f.v == e.v) fail("duplicate edge");
    }
    graph_.edges.push_back(e);
  }

  void node(int parent, int label) {
    if (at_end()) fail("expected a node label");
    int id = -1;
    for (int t = 0; t < alphabets_.num_node_labels(); ++t) {
      if (alphabets_.node_labels[t] == std::string(1, text_[pos_])) id = t;
    }
    if (id < 0) fail("unknown node label");
    ++pos_;
    const int k = graph_.num_nodes();
    if (k >= 10) fail("more than 10 nodes");
    graph_.nodes.push_back(id);
    if (parent >= 0) add_edge(parent, k, label);

    while (edge_at(pos_) > 0 && pos_ + 1 < text_.size() && std::isdigit(static_cast<unsigned char>(text_[pos_ + 1]))) {
      const int target = text_[pos_ + 1] - '0';
      if (target >= k) fail("ring to a node not yet seen");
      add_edge(k, target, edge_at(pos_));
      pos_ += 2;
    }
    while (!at_end() && text_[pos_] == '(') {
      ++pos_;
      const int e = edge_at(pos_);
      if (e < 0) fail("expected an edge label");
      ++pos_;
      node(k, e);
      if (at_end() || text_[pos_] != ')') fail("expected ')'");
      ++pos_;
    }
    if (const int e = edge_at(pos_); e > 0) {
      ++pos_;
      node(k, e);
    }
  }

  const std::string& text_;
  const LabelAlphabets& alphabets_;
  std::size_t pos_ = 0;
  VariableGraph graph_;
};

}  // namespace

LabelAlphabets synthetic_alphabets(int node_labels, int edge_labels) {
  if (node_labels < 1 || node_labels > 26) throw ConfigError("synthetic corpus: 1..26 node labels");
  if (edge_labels < 1 || edge_labels > static_cast<int>(kEdgeSymbols.size()) + 1) {
    throw ConfigError("synthetic corpus: 1.." + std::to_string(kEdgeSymbols.size() + 1) + " edge labels");
  }
  LabelAlphabets a;
  for (int t = 0; t < node_labels; ++t) a.node_labels.emplace_back(1, static_cast<char>('A' + t));
  a.edge_labels.emplace_back("none");
  for (int s = 1; s < edge_labels; ++s) a.edge_labels.emplace_back(1, kEdgeSymbols[s - 1]);
  return a;
}

std::string serialize_graph(const VariableGraph& graph, const LabelAlphabets& alphabets) {
  return traverse(graph, &alphabets).second;
}

VariableGraph parse_graph(const std::string& text, const LabelAlphabets& alphabets) {
  return Parser(text, alphabets).run();
}

VariableGraph canonical_order(const VariableGraph& graph) {
  const auto order = traverse(graph, nullptr).first;
  std::vector<int> position(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) position[order[i]] = static_cast<int>(i);
  VariableGraph out;
  for (int u : order) out.nodes.push_back(graph.nodes[u]);
  for (const auto& e : graph.edges) {
    const int a = position[e.u], b = position[e.v];
    out.edges.push_back({std::min(a, b), std::max(a, b), e.label});
  }
  std::sort(out.edges.begin(), out.edges.end());
  return out;
}

void SyntheticConfig::validate() const {
  if (count < 1) throw ConfigError("synthetic corpus: count must be positive");
  if (m_max < 2 || m_max > 9) throw ConfigError("synthetic corpus: m_max must lie in [2, 9]");
  if (edge_labels < 2) throw ConfigError("synthetic corpus: connected graphs need at least one edge label");
  if (!(extra_edge_probability >= 0.0 && extra_edge_probability <= 1.0)) {
    throw ConfigError("synthetic corpus: extra edge probability must lie in [0, 1]");
  }
  if (max_length < 2 * m_max - 1) throw ConfigError("synthetic corpus: max_length too small for a path of m_max nodes");
  synthetic_alphabets(node_labels, edge_labels);
}

Dataset gen_synthetic_corpus(const SyntheticConfig& config) {
  config.validate();
  Dataset data;
  data.alphabets = synthetic_alphabets(config.node_labels, config.edge_labels);
  std::mt19937_64 rng(config.seed);
  std::uniform_int_distribution<int> size_dist(2, config.m_max);
  std::uniform_int_distribution<int> node_dist(0, config.node_labels - 1);
  std::uniform_int_distribution<int> edge_dist(1, config.edge_labels - 1);
  std::bernoulli_distribution extra(config.extra_edge_probability);
  std::set<std::string> seen;
  long repeats = 0;

  while (static_cast<int>(data.records.size()) < config.count) {
    const int n = size_dist(rng);
    VariableGraph g;
    for (int i = 0; i < n; ++i) g.nodes.push_back(node_dist(rng));
    std::vector<std::vector<bool>> linked(n, std::vector<bool>(n, false));
    for (int i = 1; i < n; ++i) {
      const int j = std::uniform_int_distribution<int>(0, i - 1)(rng);
      g.edges.push_back({j, i, edge_dist(rng)});
      linked[j][i] = true;
    }
    for (int i = 0; i < n; ++i) {
      for (int j = i + 1; j < n; ++j) {
        if (!linked[i][j] && extra(rng)) g.edges.push_back({i, j, edge_dist(rng)});
      }
    }
    std::sort(g.edges.begin(), g.edges.end());
    std::string text = serialize_graph(g, data.alphabets);
    if (static_cast<int>(text.size()) > config.max_length) continue;
    if (config.unique && !seen.insert(text).second) {
      if (++repeats > 100 * config.count) throw ConfigError("synthetic corpus: too few distinct graphs for count");
      continue;
    }
    data.records.push_back({text, parse_graph(text, data.alphabets), true});
  }
  return data;
}

}  // namespace ele
