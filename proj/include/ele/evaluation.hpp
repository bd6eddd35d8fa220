#pragma once

#include <cstddef>
#include <vector>

#include "ele/ged.hpp"
#include "ele/graph.hpp"

namespace ele {

struct EvaluationMetrics {
  std::size_t count = 0;
  double mean_ged = 0.0;
  double std_ged = 0.0;      // population standard deviation over examples
  std::size_t perfect = 0;   // examples with GED exactly 0
  std::vector<double> per_example;
};

/// Throws ShapeError when the lists differ in length.
EvaluationMetrics evaluate(const std::vector<VariableGraph>& predictions, const std::vector<VariableGraph>& references,
                           const EditCosts& costs = {});

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population standard deviation
  std::size_t n = 0;
};

MeanStd mean_std(const std::vector<double>& values);

/// Most frequent graph; the earliest one wins ties. Throws ContractError on an empty list.
VariableGraph modal_graph(const std::vector<VariableGraph>& graphs);

}  // namespace ele
