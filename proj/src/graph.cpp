#include "fbesag/graph.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <queue>
#include <sstream>

#include "text_util.hpp"

namespace fbesag {

AdjacencyGraph::AdjacencyGraph(std::size_t n_areas, const std::vector<Edge>& edges)
    : neighbors_(n_areas) {
  for (const auto& [i, j] : edges) {
    if (i >= n_areas || j >= n_areas)
      throw std::invalid_argument("edge (" + std::to_string(i) + ", " + std::to_string(j) +
                                  ") out of range for " + std::to_string(n_areas) + " areas");
    if (i == j) throw std::invalid_argument("self loop at area " + std::to_string(i));
    neighbors_[i].push_back(j);
    neighbors_[j].push_back(i);
  }
  for (auto& nb : neighbors_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    n_edges_ += nb.size();
  }
  n_edges_ /= 2;
}

bool AdjacencyGraph::adjacent(std::size_t i, std::size_t j) const {
  const auto& nb = neighbors_.at(i);
  return std::binary_search(nb.begin(), nb.end(), j);
}

std::vector<Edge> AdjacencyGraph::edges() const {
  std::vector<Edge> out;
  out.reserve(n_edges_);
  for (std::size_t i = 0; i < neighbors_.size(); ++i)
    for (auto j : neighbors_[i])
      if (i < j) out.emplace_back(i, j);
  return out;
}

AdjacencyGraph parse_graph(std::string_view text) {
  const auto lines = detail::split_lines(text);
  std::optional<std::size_t> n;
  std::vector<Edge> edges;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    auto line = lines[ln];
    if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const auto tokens = detail::split_ws(line);
    if (tokens.empty()) continue;
    const std::size_t lineno = ln + 1;

    std::vector<long long> values;
    values.reserve(tokens.size());
    for (auto tok : tokens) {
      auto v = detail::parse_number<long long>(tok);
      if (!v) throw ParseError(lineno, "expected an integer, got '" + std::string(tok) + "'");
      values.push_back(*v);
    }

    if (!n) {
      if (values.size() != 1 || values[0] < 1)
        throw ParseError(lineno, "first line must hold a positive area count");
      n = static_cast<std::size_t>(values[0]);
      continue;
    }
    if (values.size() < 2) throw ParseError(lineno, "expected '<area-id> <num-neighbors> ...'");
    const auto id = values[0];
    const auto count = values[1];
    if (id < 1 || static_cast<std::size_t>(id) > *n)
      throw ParseError(lineno, "area id " + std::to_string(id) + " out of range 1.." +
                                   std::to_string(*n));
    if (count < 0 || static_cast<std::size_t>(count) != values.size() - 2)
      throw ParseError(lineno, "neighbour count " + std::to_string(count) + " does not match " +
                                   std::to_string(values.size() - 2) + " listed ids");
    for (std::size_t k = 2; k < values.size(); ++k) {
      const auto nb = values[k];
      if (nb < 1 || static_cast<std::size_t>(nb) > *n)
        throw ParseError(lineno, "neighbour id " + std::to_string(nb) + " out of range 1.." +
                                     std::to_string(*n));
      if (nb == id) throw ParseError(lineno, "self loop at area " + std::to_string(id));
      edges.emplace_back(static_cast<std::size_t>(id - 1), static_cast<std::size_t>(nb - 1));
    }
  }
  if (!n) throw ParseError(0, "graph file is empty");
  return AdjacencyGraph(*n, edges);
}

AdjacencyGraph read_graph_file(const std::string& path) {
  return parse_graph(detail::read_text_file(path));
}

std::string serialize_graph(const AdjacencyGraph& graph) {
  std::ostringstream out;
  out << graph.n_areas() << '\n';
  for (std::size_t i = 0; i < graph.n_areas(); ++i) {
    const auto& nb = graph.neighbors(i);
    out << i + 1 << ' ' << nb.size();
    for (auto j : nb) out << ' ' << j + 1;
    out << '\n';
  }
  return out.str();
}

std::vector<std::vector<std::size_t>> connected_components(const AdjacencyGraph& graph) {
  const auto n = graph.n_areas();
  std::vector<bool> seen(n, false);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<std::size_t> comp;
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = true;
    while (!q.empty()) {
      auto v = q.front();
      q.pop();
      comp.push_back(v);
      for (auto w : graph.neighbors(v))
        if (!seen[w]) {
          seen[w] = true;
          q.push(w);
        }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

AdjacencyGraph grid_graph(std::size_t rows, std::size_t cols) {
  if (rows == 0 || cols == 0) throw std::invalid_argument("grid dimensions must be positive");
  std::vector<Edge> edges;
  edges.reserve(rows * (cols - 1) + cols * (rows - 1));
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) {
      const auto i = r * cols + c;
      if (c + 1 < cols) edges.emplace_back(i, i + 1);
      if (r + 1 < rows) edges.emplace_back(i, i + cols);
    }
  return AdjacencyGraph(rows * cols, edges);
}

std::vector<std::size_t> Partition::subregion_sizes() const {
  std::vector<std::size_t> sizes(n_subregions(), 0);
  for (auto l : labels_) ++sizes[l];
  return sizes;
}

Partition build_partition(const AdjacencyGraph& graph, const std::vector<std::string>& labels) {
  if (labels.size() != graph.n_areas())
    throw std::invalid_argument("partition has " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(graph.n_areas()) + " areas");
  if (labels.empty()) throw std::invalid_argument("partition is empty");
  Partition p;
  std::map<std::string, std::size_t> index;
  p.labels_.reserve(labels.size());
  for (const auto& name : labels) {
    auto [it, inserted] = index.emplace(name, p.names_.size());
    if (inserted) p.names_.push_back(name);
    p.labels_.push_back(it->second);
  }
  const auto P = p.names_.size();
  p.cross_counts_.assign(graph.n_areas() * P, 0);
  for (std::size_t i = 0; i < graph.n_areas(); ++i) {
    for (auto j : graph.neighbors(i)) ++p.cross_counts_[i * P + p.labels_[j]];
    std::size_t total = 0;
    for (std::size_t l = 0; l < P; ++l) total += p.cross_counts_[i * P + l];
    if (total != graph.degree(i)) throw std::logic_error("neighbour counts do not decompose");
  }
  return p;
}

Partition build_partition(const AdjacencyGraph& graph, const std::vector<int>& labels) {
  std::vector<std::string> names;
  names.reserve(labels.size());
  for (int l : labels) names.push_back(std::to_string(l));
  return build_partition(graph, names);
}

Partition single_region(const AdjacencyGraph& graph) {
  return build_partition(graph, std::vector<std::string>(graph.n_areas(), "1"));
}

Partition quadrant_partition(std::size_t rows, std::size_t cols,
                             const std::vector<std::size_t>& split_rows,
                             const std::vector<std::size_t>& split_cols) {
  auto check = [](const std::vector<std::size_t>& splits, std::size_t extent, const char* what) {
    for (std::size_t k = 0; k < splits.size(); ++k) {
      if (splits[k] == 0 || splits[k] >= extent)
        throw std::invalid_argument(std::string(what) + " split " + std::to_string(splits[k]) +
                                    " is not strictly inside 0.." + std::to_string(extent));
      if (k > 0 && splits[k] <= splits[k - 1])
        throw std::invalid_argument(std::string(what) + " splits must be increasing");
    }
  };
  check(split_rows, rows, "row");
  check(split_cols, cols, "column");
  auto band = [](const std::vector<std::size_t>& splits, std::size_t x) {
    return static_cast<std::size_t>(std::upper_bound(splits.begin(), splits.end(), x) -
                                    splits.begin());
  };
  const auto graph = grid_graph(rows, cols);
  const auto ncb = split_cols.size() + 1;
  std::vector<std::string> labels;
  labels.reserve(rows * cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      labels.push_back(std::to_string(band(split_rows, r) * ncb + band(split_cols, c) + 1));
  return build_partition(graph, labels);
}

Partition parse_partition_csv(const AdjacencyGraph& graph, std::string_view text) {
  const auto lines = detail::split_lines(text);
  std::vector<std::optional<std::string>> labels(graph.n_areas());
  bool header = false;
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    const auto line = detail::trim(lines[ln]);
    if (line.empty() || line.front() == '#') continue;
    const auto lineno = ln + 1;
    auto fields = detail::split(line, ',');
    if (!header) {
      if (fields.size() != 2 || detail::trim(fields[0]) != "area" ||
          detail::trim(fields[1]) != "label")
        throw ParseError(lineno, "expected header 'area,label'");
      header = true;
      continue;
    }
    if (fields.size() != 2) throw ParseError(lineno, "expected 'area,label'");
    auto id = detail::parse_number<long long>(fields[0]);
    if (!id || *id < 1 || static_cast<std::size_t>(*id) > graph.n_areas())
      throw ParseError(lineno, "area id '" + std::string(detail::trim(fields[0])) +
                                   "' out of range 1.." + std::to_string(graph.n_areas()));
    auto label = detail::trim(fields[1]);
    if (label.empty()) throw ParseError(lineno, "empty label");
    auto& slot = labels[static_cast<std::size_t>(*id - 1)];
    if (slot) throw ParseError(lineno, "area " + std::to_string(*id) + " listed twice");
    slot = std::string(label);
  }
  if (!header) throw ParseError(0, "partition file is empty");
  std::vector<std::string> out;
  out.reserve(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (!labels[i]) throw ParseError(0, "area " + std::to_string(i + 1) + " has no label");
    out.push_back(*labels[i]);
  }
  return build_partition(graph, out);
}

Partition read_partition_file(const AdjacencyGraph& graph, const std::string& path) {
  return parse_partition_csv(graph, detail::read_text_file(path));
}

std::vector<std::size_t> noncontiguous_subregions(const AdjacencyGraph& graph,
                                                  const Partition& partition) {
  std::vector<std::size_t> out;
  const auto P = partition.n_subregions();
  std::vector<bool> seen(graph.n_areas(), false);
  std::vector<std::size_t> pieces(P, 0);
  for (std::size_t s = 0; s < graph.n_areas(); ++s) {
    if (seen[s]) continue;
    const auto l = partition.label(s);
    ++pieces[l];
    std::queue<std::size_t> q;
    q.push(s);
    seen[s] = true;
    while (!q.empty()) {
      auto v = q.front();
      q.pop();
      for (auto w : graph.neighbors(v))
        if (!seen[w] && partition.label(w) == l) {
          seen[w] = true;
          q.push(w);
        }
    }
  }
  for (std::size_t l = 0; l < P; ++l)
    if (pieces[l] > 1) out.push_back(l);
  return out;
}

}  // namespace fbesag
