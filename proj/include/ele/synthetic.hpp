#pragma once

// Synthetic string -> graph corpus. Each input is the canonical depth-first serialization
// of its graph, so the mapping is exact:
//
//   graph  := node
//   node   := LABEL ring* branch* [EDGE node]
//   ring   := EDGE DIGIT          (edge back to an earlier node, by visit index)
//   branch := '(' EDGE node ')'
//
// Nodes are numbered in visit order; neighbours are visited lowest index first.

#include <cstdint>
#include <string>

#include "ele/dataset.hpp"
#include "ele/graph.hpp"

namespace ele {

/// node labels "A", "B", ...; edge labels "none", "-", "=", "#", ...
LabelAlphabets synthetic_alphabets(int node_labels, int edge_labels);

/// Requires a connected graph with at most 10 nodes and single-character labels.
std::string serialize_graph(const VariableGraph& graph, const LabelAlphabets& alphabets);

/// Inverse of serialize_graph; nodes come back in visit order. Throws InputError on malformed text.
VariableGraph parse_graph(const std::string& text, const LabelAlphabets& alphabets);

/// Relabels nodes into the order serialize_graph visits them.
VariableGraph canonical_order(const VariableGraph& graph);

struct SyntheticConfig {
  int count = 2000;
  int m_max = 6;
  int node_labels = 3;
  int edge_labels = 3;
  double extra_edge_probability = 0.15;
  int max_length = 25;
  /// Skip graphs whose serialization was already drawn.
  bool unique = false;
  std::uint64_t seed = 0;
  void validate() const;
};

/// Random connected graphs (random spanning tree plus extra edges) with 2..m_max nodes,
/// stored in canonical order; serializations longer than max_length are redrawn.
/// Throws ConfigError when `unique` is set and the draw stalls on repeats.
Dataset gen_synthetic_corpus(const SyntheticConfig& config);

}  // namespace ele
