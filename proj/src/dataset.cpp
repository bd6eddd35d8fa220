#include "ele/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <ostream>

#include <nlohmann/json.hpp>

#include "ele/errors.hpp"

namespace ele {

using nlohmann::json;

int Dataset::max_nodes() const {
  int best = 0;
  for (const auto& r : records) {
    if (r.has_graph) best = std::max(best, r.graph.num_nodes());
  }
  return best;
}

Dataset read_dataset(std::istream& in) {
  Dataset data;
  std::string line;
  long line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError("line " + std::to_string(line_no) + ": " + e.what());
    }
    if (!have_header) {
      if (!obj.contains("node_labels") || !obj.contains("edge_labels")) {
        throw InputError("first line must be the alphabet header");
      }
      data.alphabets.node_labels = obj.at("node_labels").get<std::vector<std::string>>();
      data.alphabets.edge_labels = obj.at("edge_labels").get<std::vector<std::string>>();
      if (obj.contains("virtual_label")) data.alphabets.virtual_label = obj.at("virtual_label");
      data.alphabets.validate();
      have_header = true;
      continue;
    }
    DatasetRecord rec;
    try {
      rec.input = obj.value("input", std::string());
      rec.has_graph = obj.contains("nodes");
      if (rec.has_graph) {
        for (const auto& name : obj.at("nodes")) {
          rec.graph.nodes.push_back(data.alphabets.node_id(name.get<std::string>()));
        }
        const int n = rec.graph.num_nodes();
        if (obj.contains("edges")) {
          for (const auto& e : obj.at("edges")) {
            int u = e.at(0).get<int>();
            int v = e.at(1).get<int>();
            const int label = data.alphabets.edge_id(e.at(2).get<std::string>());
            if (u < 0 || v < 0 || u >= n || v >= n || u == v) {
              throw ValidationError("invalid edge endpoints");
            }
            if (u > v) std::swap(u, v);
            if (label != 0) rec.graph.edges.push_back({u, v, label});
          }
        }
        std::sort(rec.graph.edges.begin(), rec.graph.edges.end());
        for (std::size_t k = 1; k < rec.graph.edges.size(); ++k) {
          const auto& a = rec.graph.edges[k - 1];
          const auto& b = rec.graph.edges[k];
          if (a.u == b.u && a.v == b.v) {
            if (a.label != b.label) throw ValidationError("conflicting duplicate edge labels");
          }
        }
        rec.graph.edges.erase(std::unique(rec.graph.edges.begin(), rec.graph.edges.end()),
                              rec.graph.edges.end());
      }
    } catch (const json::exception& e) {
      throw InputError("line " + std::to_string(line_no) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw InputError("line " + std::to_string(line_no) + ": " + e.what());
    }
    data.records.push_back(std::move(rec));
  }
  if (!have_header) throw InputError("empty dataset");
  return data;
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  return read_dataset(in);
}

void write_dataset(std::ostream& out, const Dataset& data) {
  json header = {{"node_labels", data.alphabets.node_labels},
                 {"edge_labels", data.alphabets.edge_labels}};
  if (data.alphabets.virtual_label != LabelAlphabets{}.virtual_label) header["virtual_label"] = data.alphabets.virtual_label;
  out << header.dump() << '\n';
  for (const auto& r : data.records) {
    json obj;
    obj["input"] = r.input;
    if (r.has_graph) {
      json nodes = json::array();
      for (int l : r.graph.nodes) nodes.push_back(data.alphabets.node_labels.at(l));
      json edges = json::array();
      for (const auto& e : r.graph.edges) {
        edges.push_back({e.u, e.v, data.alphabets.edge_labels.at(e.label)});
      }
      obj["nodes"] = std::move(nodes);
      obj["edges"] = std::move(edges);
    }
    out << obj.dump() << '\n';
  }
}

void save_dataset(const std::string& path, const Dataset& data) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write " + path);
  write_dataset(out, data);
}

std::vector<PaddedGraph> padded_outputs(const Dataset& data, int m_max) {
  std::vector<PaddedGraph> out;
  out.reserve(data.records.size());
  const GraphSpace space = data.space(m_max);
  for (const auto& r : data.records) {
    if (!r.has_graph) throw InputError("record without a graph where outputs are required");
    out.push_back(pad(r.graph, space));
  }
  return out;
}

std::vector<std::string> inputs(const Dataset& data) {
  std::vector<std::string> out;
  out.reserve(data.records.size());
  for (const auto& r : data.records) out.push_back(r.input);
  return out;
}

}  // namespace ele
