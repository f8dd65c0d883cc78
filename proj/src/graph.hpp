#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "matrix.hpp"

namespace csna {

using NodeId = std::uint32_t;

struct Edge {
  NodeId src = 0;
  NodeId dst = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

/// Undirected attributed graph. Every undirected edge is stored in both
/// directions; edges are kept sorted by (src, dst) so each source's
/// neighbourhood is a contiguous run.
struct Graph {
  std::string name;
  std::size_t n = 0;
  std::size_t num_classes = 0;
  Matrix<double> features;  // n x d
  std::vector<int> labels;  // n
  std::vector<Edge> edges;
  bool has_self_loops = false;

  std::size_t feature_dim() const { return features.cols; }
  std::size_t undirected_edge_count() const;

  /// Throws Contract on any broken invariant (range, duplicates, symmetry,
  /// self-loop bookkeeping, label range, feature shape).
  void validate() const;
};

/// Builds a graph from an undirected pair list (both directions are added).
Graph make_graph(std::size_t n, std::size_t num_classes, Matrix<double> features,
                 std::vector<int> labels, const std::vector<std::pair<NodeId, NodeId>>& undirected,
                 std::string name = {});

/// Reads the dataset directory format: meta.json, features.csv, labels.csv,
/// edges.csv. Parse errors carry file name and line number.
Graph load_graph(const std::filesystem::path& dir);
void save_graph(const Graph& g, const std::filesystem::path& dir);

/// Exactly one (i,i) per node; idempotent.
Graph add_self_loops(const Graph& g);

/// Fraction of non-self-loop undirected edges joining same-label nodes.
/// Returns 0 for a graph without such edges.
double edge_homophily(const Graph& g);

/// Degree per node counting every stored edge whose source is the node.
std::vector<std::size_t> out_degrees(const Graph& g);

struct Split {
  std::vector<NodeId> train;
  std::vector<NodeId> val;
  std::vector<NodeId> test;
  friend bool operator==(const Split&, const Split&) = default;
};

struct SplitSet {
  std::uint64_t seed = 42;
  std::array<double, 3> ratios{0.6, 0.2, 0.2};
  std::vector<Split> splits;
  friend bool operator==(const SplitSet&, const SplitSet&) = default;
};

inline constexpr std::array<double, 3> kDefaultSplitRatios{0.6, 0.2, 0.2};
inline constexpr std::size_t kDefaultSplitCount = 10;
inline constexpr std::uint64_t kDefaultSplitSeed = 42;

/// k independent permutations of {0..n-1}, cut at floor(r0 n), floor(r1 n),
/// remainder to test.
SplitSet generate_splits(std::size_t n, std::array<double, 3> ratios = kDefaultSplitRatios,
                         std::size_t k = kDefaultSplitCount, std::uint64_t seed = kDefaultSplitSeed);

/// Checks disjointness and coverage of {0..n-1} for every split.
void validate_splits(const SplitSet& s, std::size_t n);

std::string splits_to_json(const SplitSet& s);
SplitSet splits_from_json(const std::string& text);

}  // namespace csna
