#include "ele/evaluation.hpp"

#include <cmath>
#include <map>
#include <tuple>

#include "ele/errors.hpp"

namespace ele {

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd out;
  out.n = values.size();
  if (values.empty()) return out;
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(values.size());
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.std = std::sqrt(sq / static_cast<double>(values.size()));
  return out;
}

EvaluationMetrics evaluate(const std::vector<VariableGraph>& predictions, const std::vector<VariableGraph>& references,
                           const EditCosts& costs) {
  if (predictions.size() != references.size()) {
    throw ShapeError("evaluate: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(references.size()) + " references");
  }
  EvaluationMetrics m;
  m.count = predictions.size();
  m.per_example.reserve(m.count);
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = ged(predictions[i], references[i], costs);
    m.per_example.push_back(d);
    if (d == 0.0) ++m.perfect;
  }
  const auto summary = mean_std(m.per_example);
  m.mean_ged = summary.mean;
  m.std_ged = summary.std;
  return m;
}

VariableGraph modal_graph(const std::vector<VariableGraph>& graphs) {
  if (graphs.empty()) throw ContractError("modal_graph: no graphs");
  using Key = std::tuple<std::vector<int>, std::vector<LabeledEdge>>;
  std::map<Key, std::pair<int, std::size_t>> counts;  // count, first position
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    auto [it, inserted] = counts.try_emplace(Key{graphs[i].nodes, graphs[i].edges}, 0, i);
    ++it->second.first;
  }
  std::size_t best = 0;
  int best_count = 0;
  for (const auto& [_, entry] : counts) {
    if (entry.first > best_count || (entry.first == best_count && entry.second < best)) {
      best_count = entry.first;
      best = entry.second;
    }
  }
  return graphs[best];
}

}  // namespace ele
