#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <json.hpp>

#include "convctx/common.hpp"

namespace convctx::hdbscan {

inline constexpr int kNoise = -1;

struct Edge {
  int a;  // a < b
  int b;
  double weight;
};

// Strict total order used for every tie: (weight, a, b).
bool edge_less(const Edge& x, const Edge& y);

// Minimum spanning tree of a complete graph given as a dense symmetric
// matrix. Ties resolve by (weight, min index, max index); edges come out in
// the order Prim adds them.
std::vector<Edge> mst(const RowMatrix<double>& distances);

// Distance to the min_samples-th nearest neighbor, the point itself counted
// first; min_samples above n uses the farthest point.
std::vector<double> core_distances(const RowMatrix<double>& points, int min_samples);

// MST of the mutual reachability graph, computed without materializing it.
std::vector<Edge> mutual_reachability_mst(const RowMatrix<double>& points, int min_samples);

struct DendrogramNode {
  int left, right;  // ids < n are points, otherwise n + merge index
  double distance;
  int size;
};

// Single-linkage merges from MST edges taken in edge_less order.
std::vector<DendrogramNode> single_linkage(int n, std::vector<Edge> tree);

// Condensed tree row. Cluster ids start at n (the root); child < n is a point
// leaving its cluster at `lambda`.
struct CondensedEdge {
  int parent;
  int child;
  double lambda;
  int child_size;
};

std::vector<CondensedEdge> condense(const std::vector<DendrogramNode>& dendrogram, int n, int min_cluster_size);

struct ClusterConfig {
  int min_cluster_size = 100;
  int min_samples = 1;
};

struct ClusterResult {
  std::vector<int> labels;         // kNoise or 0..num_clusters-1
  std::vector<double> stability;   // per label
  std::vector<CondensedEdge> condensed_tree;
  int num_clusters = 0;

  double noise_fraction() const;
  nlohmann::json summary() const;
};

// Excess-of-mass selection over a condensed tree, root excluded. Labels are
// numbered by the smallest point index of each selected cluster.
ClusterResult select_clusters(std::vector<CondensedEdge> tree, int n);

// Throws DataError on non-finite coordinates, std::invalid_argument on an
// empty input or min_cluster_size < 2 or min_samples < 1.
ClusterResult cluster(const RowMatrix<double>& points, const ClusterConfig& config = {});

}  // namespace convctx::hdbscan
