#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "ele/graph.hpp"

namespace ele {

struct DatasetRecord {
  std::string input;
  VariableGraph graph;
  bool has_graph = true;
};

/// Line-delimited JSON corpus: a header line with the alphabets, then one record per line
/// {"input": ..., "nodes": [...], "edges": [[i, j, label], ...]}.
struct Dataset {
  LabelAlphabets alphabets;
  std::vector<DatasetRecord> records;

  /// Largest real node count over all records carrying a graph.
  int max_nodes() const;
  GraphSpace space(int m_max) const {
    return GraphSpace{m_max, alphabets.num_node_labels(), alphabets.num_edge_labels()};
  }
};

Dataset read_dataset(std::istream& in);
Dataset load_dataset(const std::string& path);
void write_dataset(std::ostream& out, const Dataset& data);
void save_dataset(const std::string& path, const Dataset& data);

/// Pads every record graph to `m_max` (all records must carry graphs).
std::vector<PaddedGraph> padded_outputs(const Dataset& data, int m_max);
std::vector<std::string> inputs(const Dataset& data);

}  // namespace ele
