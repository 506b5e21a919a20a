#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace fbesag {

/// Input that failed validation. `line()` is 1-based, 0 when not tied to a line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what : what),
        line_(line) {}
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

using Edge = std::pair<std::size_t, std::size_t>;

/// Undirected first-order neighbourhood structure over `n_areas` small areas.
/// Neighbour lists are sorted and symmetric; there are no self loops or duplicates.
class AdjacencyGraph {
 public:
  AdjacencyGraph() = default;

  /// Builds from an edge list. Duplicate and reversed edges collapse; self loops
  /// and out-of-range indices throw std::invalid_argument.
  AdjacencyGraph(std::size_t n_areas, const std::vector<Edge>& edges);

  std::size_t n_areas() const noexcept { return neighbors_.size(); }
  std::size_t n_edges() const noexcept { return n_edges_; }
  const std::vector<std::size_t>& neighbors(std::size_t i) const { return neighbors_.at(i); }
  std::size_t degree(std::size_t i) const { return neighbors_.at(i).size(); }
  bool adjacent(std::size_t i, std::size_t j) const;

  /// Edges with i < j, in lexicographic order.
  std::vector<Edge> edges() const;

  bool operator==(const AdjacencyGraph&) const = default;

 private:
  std::vector<std::vector<std::size_t>> neighbors_;
  std::size_t n_edges_ = 0;
};

/// Parses the areal adjacency text format: first line N, then
/// `<area-id> <num-neighbors> <neighbor-id>...` with 1-based ids.
AdjacencyGraph parse_graph(std::string_view text);
AdjacencyGraph read_graph_file(const std::string& path);

/// Canonical text form: every area on its own line, neighbours sorted.
std::string serialize_graph(const AdjacencyGraph& graph);

std::vector<std::vector<std::size_t>> connected_components(const AdjacencyGraph& graph);

/// 4-neighbour lattice, areas numbered row-major.
AdjacencyGraph grid_graph(std::size_t rows, std::size_t cols);

/// Assignment of areas to P sub-regions with per-area neighbour counts by sub-region.
class Partition {
 public:
  std::size_t n_areas() const noexcept { return labels_.size(); }
  std::size_t n_subregions() const noexcept { return names_.size(); }
  std::size_t label(std::size_t area) const { return labels_.at(area); }
  const std::vector<std::size_t>& labels() const noexcept { return labels_; }

  /// n_{il}: number of neighbours of `area` lying in sub-region `l`.
  std::size_t cross_count(std::size_t area, std::size_t l) const {
    return cross_counts_.at(area * n_subregions() + l);
  }

  /// Original label of each dense sub-region index.
  const std::vector<std::string>& names() const noexcept { return names_; }
  std::vector<std::size_t> subregion_sizes() const;

  friend Partition build_partition(const AdjacencyGraph&, const std::vector<std::string>&);

 private:
  std::vector<std::size_t> labels_;
  std::vector<std::string> names_;
  std::vector<std::size_t> cross_counts_;  // row-major n_areas x P
};

/// Labels are normalised to 0..P-1 in order of first appearance.
Partition build_partition(const AdjacencyGraph& graph, const std::vector<std::string>& labels);
Partition build_partition(const AdjacencyGraph& graph, const std::vector<int>& labels);
Partition single_region(const AdjacencyGraph& graph);

/// Rectangular blocks of a rows x cols lattice, labelled row-major.
/// Splits are the first row (column) index of each new band.
Partition quadrant_partition(std::size_t rows, std::size_t cols,
                             const std::vector<std::size_t>& split_rows,
                             const std::vector<std::size_t>& split_cols);

/// Reads the `area,label` CSV. Rows may come in any order; labels are normalised
/// in area order.
Partition parse_partition_csv(const AdjacencyGraph& graph, std::string_view text);
Partition read_partition_file(const AdjacencyGraph& graph, const std::string& path);

/// Sub-regions whose areas do not induce a connected subgraph.
std::vector<std::size_t> noncontiguous_subregions(const AdjacencyGraph& graph,
                                                  const Partition& partition);

}  // namespace fbesag
