#pragma once

// File formats and experiment plumbing: CSV matrix/edge-list/triplet codecs
// (1-indexed identifiers on disk), JSON configs with strict key checking,
// content hashing for reproducible artifact manifests, plot-data emission.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <set>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "netcarto/common.hpp"
#include "netcarto/netmodel.hpp"

namespace netcarto {

enum class MissingPolicy { Error, Mask };

struct LoadedMatrix {
  Matrix values;
  SamplingMask mask;  // full mask under the Error policy
};

inline LoadedMatrix load_matrix_csv(const std::string& path,
                                    MissingPolicy policy) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_matrix_csv: cannot open " + path);
  std::vector<std::vector<std::optional<double>>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() && in.eof()) break;
    std::vector<std::optional<double>> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      // trim
      const auto b = cell.find_first_not_of(" \t\r");
      const auto e = cell.find_last_not_of(" \t\r");
      cell = (b == std::string::npos) ? "" : cell.substr(b, e - b + 1);
      if (cell.empty()) {
        row.push_back(std::nullopt);
      } else {
        std::size_t consumed = 0;
        double v;
        try {
          v = std::stod(cell, &consumed);
        } catch (const std::exception&) {
          throw std::runtime_error("load_matrix_csv: non-numeric cell '" +
                                   cell + "' in " + path);
        }
        if (consumed != cell.size())
          throw std::runtime_error("load_matrix_csv: non-numeric cell '" +
                                   cell + "' in " + path);
        row.push_back(v);
      }
    }
    if (!line.empty() && line.back() == ',') row.push_back(std::nullopt);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw std::runtime_error("load_matrix_csv: empty file " + path);
  const auto cols = rows.front().size();
  for (const auto& r : rows)
    if (r.size() != cols)
      throw std::runtime_error("load_matrix_csv: ragged rows in " + path);

  LoadedMatrix out;
  out.values = Matrix::Zero(static_cast<Eigen::Index>(rows.size()),
                            static_cast<Eigen::Index>(cols));
  out.mask.keep = MaskArray::Constant(out.values.rows(), out.values.cols(), true);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      if (rows[i][j].has_value()) {
        out.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            *rows[i][j];
      } else {
        if (policy == MissingPolicy::Error)
          throw std::runtime_error("load_matrix_csv: missing cell in " + path);
        out.mask.keep(static_cast<Eigen::Index>(i),
                      static_cast<Eigen::Index>(j)) = false;
      }
    }
  return out;
}

inline void save_matrix_csv(const std::string& path, const Matrix& m,
                            const SamplingMask* mask = nullptr) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_matrix_csv: cannot open " + path);
  out.precision(17);
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j) out << ',';
      if (mask == nullptr || mask->keep(i, j)) out << m(i, j);
    }
    out << '\n';
  }
}

// Topology edge list: `node_a,node_b`, 1-indexed, one row per directed link.
inline void save_topology_csv(const std::string& path, const Topology& topo) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_topology_csv: cannot open " + path);
  out << "node_a,node_b\n";
  for (const auto& [a, b] : topo.links) out << a + 1 << ',' << b + 1 << '\n';
}

inline Topology load_topology_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_topology_csv: cannot open " + path);
  Topology topo;
  std::string line;
  std::getline(in, line);  // header
  int max_node = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string a, b;
    std::getline(ss, a, ',');
    std::getline(ss, b, ',');
    const int u = std::stoi(a) - 1, v = std::stoi(b) - 1;
    topo.links.emplace_back(u, v);
    max_node = std::max({max_node, u, v});
  }
  topo.node_count = max_node + 1;
  return topo;
}

// Routing file: sparse triplets `link,flow,1`, 1-indexed.
inline void save_routing_csv(const std::string& path, const RoutingMatrix& r) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_routing_csv: cannot open " + path);
  out << "link,flow,value\n";
  for (Eigen::Index f = 0; f < r.entries.cols(); ++f)
    for (Eigen::Index l = 0; l < r.entries.rows(); ++l)
      if (r.entries(l, f) != 0.0)
        out << l + 1 << ',' << f + 1 << ",1\n";
}

inline Matrix load_routing_csv(const std::string& path, Eigen::Index links,
                               Eigen::Index flows) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_routing_csv: cannot open " + path);
  Matrix r = Matrix::Zero(links, flows);
  std::string line;
  std::getline(in, line);  // header
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string l, f, v;
    std::getline(ss, l, ',');
    std::getline(ss, f, ',');
    std::getline(ss, v, ',');
    r(std::stoi(l) - 1, std::stoi(f) - 1) = std::stod(v);
  }
  return r;
}

// FNV-1a over the raw bytes; stable across runs for manifest hashing.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::uint64_t hash_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("hash_file: cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

struct MetricsRecord {
  std::string name;
  double value = 0.0;
  std::string units;
  std::string module;
  std::uint64_t seed = 0;
  std::uint64_t params_hash = 0;
};

inline nlohmann::json to_json(const MetricsRecord& m) {
  require(std::isfinite(m.value), "MetricsRecord: non-finite value");
  return {{"name", m.name},     {"value", m.value}, {"units", m.units},
          {"module", m.module}, {"seed", m.seed},   {"params_hash", m.params_hash}};
}

// Strict config parsing: every key must be consumed, unknown keys are errors.
class ConfigReader {
 public:
  explicit ConfigReader(nlohmann::json j) : json_(std::move(j)) {
    require(json_.is_object(), "config: expected a JSON object");
  }

  template <class T>
  T get(const std::string& key, const T& fallback) {
    consumed_.insert(key);
    if (!json_.contains(key)) return fallback;
    return json_.at(key).get<T>();
  }

  template <class T>
  T required(const std::string& key) {
    consumed_.insert(key);
    if (!json_.contains(key))
      throw std::runtime_error("config: missing required key '" + key + "'");
    return json_.at(key).get<T>();
  }

  void finish() const {
    for (const auto& [key, value] : json_.items())
      if (!consumed_.count(key))
        throw std::runtime_error("config: unknown key '" + key + "'");
  }

 private:
  nlohmann::json json_;
  std::set<std::string> consumed_;
};

// Plot-data emission: plain CSV, one header row, sorted by the x key.
inline void emit_series_csv(const std::string& path, const std::string& x_name,
                            const std::string& y_name,
                            std::vector<std::pair<double, double>> series) {
  require(!series.empty(), "emit_series_csv: empty series");
  std::sort(series.begin(), series.end());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("emit_series_csv: cannot open " + path);
  out.precision(17);
  out << x_name << ',' << y_name << '\n';
  for (const auto& [x, y] : series) out << x << ',' << y << '\n';
}

}  // namespace netcarto
