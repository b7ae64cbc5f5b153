#include "convctx/hdbscan.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace convctx::hdbscan {
namespace {

struct Key {
  double w;
  int lo, hi;
  bool operator<(const Key& o) const {
    if (w != o.w) return w < o.w;
    if (lo != o.lo) return lo < o.lo;
    return hi < o.hi;
  }
};

template <typename Dist>
std::vector<Edge> prim(int n, Dist dist) {
  std::vector<Edge> out;
  if (n <= 1) return out;
  out.reserve(static_cast<std::size_t>(n - 1));
  const Key none{std::numeric_limits<double>::infinity(), n, n};
  std::vector<Key> best(static_cast<std::size_t>(n), none);
  std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
  int current = 0;
  in_tree[0] = 1;
  for (int added = 1; added < n; ++added) {
    int next = -1;
    for (int v = 0; v < n; ++v) {
      if (in_tree[v]) continue;
      const Key k{dist(current, v), std::min(current, v), std::max(current, v)};
      if (k < best[v]) best[v] = k;
      if (next < 0 || best[v] < best[next]) next = v;
    }
    in_tree[next] = 1;
    out.push_back({best[next].lo, best[next].hi, best[next].w});
    current = next;
  }
  return out;
}

class UnionFind {
 public:
  explicit UnionFind(int n) : parent_(static_cast<std::size_t>(n)) { std::iota(parent_.begin(), parent_.end(), 0); }
  int find(int x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void attach(int child_root, int parent_root) { parent_[child_root] = parent_root; }
  void grow(int n) {
    const int old = static_cast<int>(parent_.size());
    parent_.resize(static_cast<std::size_t>(n));
    std::iota(parent_.begin() + old, parent_.end(), old);
  }

 private:
  std::vector<int> parent_;
};

double to_lambda(double distance) {
  return distance > 0.0 ? 1.0 / distance : std::numeric_limits<double>::infinity();
}

void check_points(const RowMatrix<double>& points) {
  if (points.rows() < 1 || points.cols() < 1) throw std::invalid_argument("cluster: need at least one point and one dimension");
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    if (!points.row(i).allFinite()) throw DataError("cluster: non-finite coordinate in row " + std::to_string(i));
  }
}

double point_distance(const RowMatrix<double>& p, int a, int b) { return (p.row(a) - p.row(b)).norm(); }

}  // namespace

bool edge_less(const Edge& x, const Edge& y) {
  return Key{x.weight, x.a, x.b} < Key{y.weight, y.a, y.b};
}

std::vector<Edge> mst(const RowMatrix<double>& d) {
  if (d.rows() != d.cols()) throw std::invalid_argument("mst: distance matrix must be square");
  return prim(static_cast<int>(d.rows()), [&](int a, int b) { return d(a, b); });
}

std::vector<double> core_distances(const RowMatrix<double>& points, int min_samples) {
  if (min_samples < 1) throw std::invalid_argument("min_samples must be >= 1");
  const int n = static_cast<int>(points.rows());
  std::vector<double> core(static_cast<std::size_t>(n), 0.0);
  if (min_samples == 1) return core;
  const auto k = static_cast<std::size_t>(std::min(min_samples, n) - 1);
  std::vector<double> row(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) row[j] = i == j ? 0.0 : point_distance(points, i, j);
    std::nth_element(row.begin(), row.begin() + static_cast<std::ptrdiff_t>(k), row.end());
    core[i] = row[k];
  }
  return core;
}

std::vector<Edge> mutual_reachability_mst(const RowMatrix<double>& points, int min_samples) {
  const auto core = core_distances(points, min_samples);
  return prim(static_cast<int>(points.rows()), [&](int a, int b) {
    return std::max({core[a], core[b], point_distance(points, a, b)});
  });
}

std::vector<DendrogramNode> single_linkage(int n, std::vector<Edge> tree) {
  if (static_cast<int>(tree.size()) != std::max(n - 1, 0)) throw std::invalid_argument("single_linkage: need n-1 edges");
  std::sort(tree.begin(), tree.end(), edge_less);
  UnionFind uf(n);
  std::vector<int> size(static_cast<std::size_t>(n), 1);
  std::vector<DendrogramNode> out;
  out.reserve(tree.size());
  for (const auto& e : tree) {
    const int ra = uf.find(e.a);
    const int rb = uf.find(e.b);
    if (ra == rb) throw std::invalid_argument("single_linkage: edges contain a cycle");
    const int id = n + static_cast<int>(out.size());
    uf.grow(id + 1);
    size.push_back(size[ra] + size[rb]);
    uf.attach(ra, id);
    uf.attach(rb, id);
    out.push_back({ra, rb, e.weight, size[id]});
  }
  return out;
}

std::vector<CondensedEdge> condense(const std::vector<DendrogramNode>& dendrogram, int n, int min_cluster_size) {
  std::vector<CondensedEdge> out;
  if (n <= 1) return out;
  const int root = 2 * n - 2;
  auto node_size = [&](int id) { return id < n ? 1 : dendrogram[static_cast<std::size_t>(id - n)].size; };
  auto leaves = [&](int id, auto&& emit) {
    std::vector<int> stack{id};
    while (!stack.empty()) {
      const int x = stack.back();
      stack.pop_back();
      if (x < n) {
        emit(x);
      } else {
        const auto& d = dendrogram[static_cast<std::size_t>(x - n)];
        stack.push_back(d.right);
        stack.push_back(d.left);
      }
    }
  };

  std::vector<int> relabel(static_cast<std::size_t>(2 * n - 1), -1);
  relabel[root] = n;
  int next_label = n + 1;
  std::vector<int> level{root};
  while (!level.empty()) {
    std::vector<int> next_level;
    for (int node : level) {
      if (node < n) continue;
      const auto& d = dendrogram[static_cast<std::size_t>(node - n)];
      const double lambda = to_lambda(d.distance);
      const int parent = relabel[node];
      const bool big_left = node_size(d.left) >= min_cluster_size;
      const bool big_right = node_size(d.right) >= min_cluster_size;
      auto fall_out = [&](int sub) { leaves(sub, [&](int p) { out.push_back({parent, p, lambda, 1}); }); };
      if (big_left && big_right) {
        for (int child : {d.left, d.right}) {
          relabel[child] = next_label++;
          out.push_back({parent, relabel[child], lambda, node_size(child)});
          next_level.push_back(child);
        }
      } else if (!big_left && !big_right) {
        fall_out(d.left);
        fall_out(d.right);
      } else {
        const int keep = big_left ? d.left : d.right;
        const int drop = big_left ? d.right : d.left;
        relabel[keep] = parent;
        fall_out(drop);
        next_level.push_back(keep);
      }
    }
    level = std::move(next_level);
  }
  return out;
}

ClusterResult select_clusters(std::vector<CondensedEdge> tree, int n) {
  ClusterResult result;
  result.labels.assign(static_cast<std::size_t>(n), kNoise);
  int max_cluster = n;
  for (const auto& e : tree) max_cluster = std::max({max_cluster, e.parent, e.child});
  const int num_nodes = max_cluster - n + 1;

  std::vector<double> birth(static_cast<std::size_t>(num_nodes), 0.0);
  std::vector<int> parent_of(static_cast<std::size_t>(num_nodes), -1);
  std::vector<std::vector<int>> children(static_cast<std::size_t>(num_nodes));
  for (const auto& e : tree) {
    if (e.child >= n) {
      birth[e.child - n] = e.lambda;
      parent_of[e.child - n] = e.parent - n;
      children[e.parent - n].push_back(e.child - n);
    }
  }
  std::vector<double> stability(static_cast<std::size_t>(num_nodes), 0.0);
  for (const auto& e : tree) {
    const double b = birth[e.parent - n];
    if (e.lambda != b) stability[e.parent - n] += (e.lambda - b) * e.child_size;
  }

  const std::vector<double> own_stability = stability;
  std::vector<char> selected(static_cast<std::size_t>(num_nodes), 1);
  selected[0] = 0;
  for (int c = num_nodes - 1; c >= 1; --c) {
    double subtree = 0.0;
    for (int ch : children[c]) subtree += stability[ch];
    if (subtree > stability[c]) {
      selected[c] = 0;
      stability[c] = subtree;
    } else {
      std::vector<int> stack(children[c]);
      while (!stack.empty()) {
        const int x = stack.back();
        stack.pop_back();
        selected[x] = 0;
        stack.insert(stack.end(), children[x].begin(), children[x].end());
      }
    }
  }

  // Parents precede children in id order, so one forward pass suffices.
  std::vector<int> owner(static_cast<std::size_t>(num_nodes), -1);
  for (int c = 1; c < num_nodes; ++c) owner[c] = selected[c] ? c : owner[parent_of[c]];

  std::vector<int> raw(static_cast<std::size_t>(n), -1);
  std::vector<int> first_point(static_cast<std::size_t>(num_nodes), n);
  for (const auto& e : tree) {
    if (e.child < n) {
      const int o = owner[e.parent - n];
      raw[e.child] = o;
      if (o >= 0) first_point[o] = std::min(first_point[o], e.child);
    }
  }
  std::vector<int> chosen;
  for (int c = 1; c < num_nodes; ++c) {
    if (selected[c]) chosen.push_back(c);
  }
  std::sort(chosen.begin(), chosen.end(), [&](int a, int b) { return first_point[a] < first_point[b]; });
  std::vector<int> label_of(static_cast<std::size_t>(num_nodes), kNoise);
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    label_of[chosen[i]] = static_cast<int>(i);
    result.stability.push_back(own_stability[chosen[i]]);
  }
  for (int p = 0; p < n; ++p) {
    if (raw[p] >= 0) result.labels[p] = label_of[raw[p]];
  }
  result.num_clusters = static_cast<int>(chosen.size());
  result.condensed_tree = std::move(tree);
  return result;
}

double ClusterResult::noise_fraction() const {
  if (labels.empty()) return 0.0;
  const auto noise = std::count(labels.begin(), labels.end(), kNoise);
  return static_cast<double>(noise) / static_cast<double>(labels.size());
}

nlohmann::json ClusterResult::summary() const {
  std::vector<std::size_t> sizes(static_cast<std::size_t>(num_clusters), 0);
  for (int l : labels) {
    if (l >= 0) ++sizes[l];
  }
  return {{"points", labels.size()}, {"clusters", num_clusters}, {"noise_fraction", noise_fraction()},
          {"sizes", sizes}, {"stability", stability}};
}

ClusterResult cluster(const RowMatrix<double>& points, const ClusterConfig& config) {
  if (config.min_cluster_size < 2) throw std::invalid_argument("min_cluster_size must be >= 2");
  if (config.min_samples < 1) throw std::invalid_argument("min_samples must be >= 1");
  check_points(points);
  const int n = static_cast<int>(points.rows());
  auto tree = mutual_reachability_mst(points, config.min_samples);
  const auto dendrogram = single_linkage(n, std::move(tree));
  return select_clusters(condense(dendrogram, n, config.min_cluster_size), n);
}

}  // namespace convctx::hdbscan
