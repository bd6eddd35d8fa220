#pragma once

#include "ele/graph.hpp"

namespace ele {

struct EditCosts {
  double node_insertion = 1.0;
  double node_deletion = 1.0;
  double node_substitution = 1.0;
  double edge_insertion = 1.0;
  double edge_deletion = 1.0;
  double edge_substitution = 1.0;
  /// false: edges compare only as present or absent.
  bool use_edge_labels = true;

  void validate() const;
};

/// Largest real node count accepted by the exact search.
inline constexpr int kMaxExactGedNodes = 10;

/// Exact graph edit distance by depth-first branch and bound over node assignments.
/// Throws CapacityError when either graph exceeds kMaxExactGedNodes nodes.
double ged(const VariableGraph& a, const VariableGraph& b, const EditCosts& costs = {});

}  // namespace ele
