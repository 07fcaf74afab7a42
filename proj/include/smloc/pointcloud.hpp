#pragma once

// Point clouds, an exact k-d tree, PCA normal estimation and normal-space
// sampling of registration source points.

#include "smloc/liegroup.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

namespace smloc {

struct PointCloud {
  std::vector<Vector3> points;
  /// Unit normals, empty until estimated. Invalid entries are zero.
  std::vector<Vector3> normals;
  /// RMS distance (m) of the neighborhood to its fitted plane.
  std::vector<double> planarity;
  std::vector<std::uint8_t> normal_valid;
  Vector3 sensor_origin = Vector3::Zero();

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
  bool has_normals() const { return !points.empty() && normals.size() == points.size(); }

  bool valid_normal(std::size_t i) const {
    return has_normals() && (normal_valid.empty() || normal_valid[i] != 0);
  }
};

/// Rigidly maps points, normals and the sensor origin.
inline PointCloud transform_cloud(const PointCloud& cloud, const Pose& pose) {
  PointCloud out = cloud;
  for (auto& pt : out.points) pt = pose.transform(pt);
  for (auto& n : out.normals) n = pose.R * n;
  out.sensor_origin = pose.transform(cloud.sensor_origin);
  return out;
}

/// Concatenates b onto a. The sensor origin of a is kept.
inline void append_cloud(PointCloud& a, const PointCloud& b) {
  if (a.has_normals() != b.has_normals() && !a.empty() && !b.empty()) {
    throw std::invalid_argument("append_cloud: mixing clouds with and without normals");
  }
  const bool normals = b.has_normals();
  a.points.insert(a.points.end(), b.points.begin(), b.points.end());
  if (normals) {
    a.normals.insert(a.normals.end(), b.normals.begin(), b.normals.end());
    a.planarity.insert(a.planarity.end(), b.planarity.begin(), b.planarity.end());
    a.normal_valid.insert(a.normal_valid.end(), b.normal_valid.begin(), b.normal_valid.end());
  }
}

/// Static k-d tree over a copy of the input points. Queries are exact; ties
/// in distance resolve to the lower point index, matching a linear scan.
class KdTree {
 public:
  struct Neighbor {
    std::size_t index = 0;
    double distance = 0.0;
  };

  KdTree() = default;

  explicit KdTree(std::span<const Vector3> points, std::size_t leaf_size = 10)
      : points_(points.begin(), points.end()), leaf_size_(std::max<std::size_t>(1, leaf_size)) {
    if (points_.size() >= std::numeric_limits<std::uint32_t>::max()) {
      throw std::length_error("KdTree: too many points");
    }
    order_.resize(points_.size());
    std::iota(order_.begin(), order_.end(), 0u);
    if (!points_.empty()) {
      nodes_.reserve(2 * points_.size() / leaf_size_ + 1);
      build(0, static_cast<std::uint32_t>(points_.size()));
    }
  }

  std::size_t size() const { return points_.size(); }
  bool empty() const { return points_.empty(); }
  const Vector3& point(std::size_t i) const { return points_[i]; }

  Neighbor nearest(const Vector3& q) const {
    if (points_.empty()) throw std::logic_error("KdTree::nearest on empty cloud");
    Candidate best{std::numeric_limits<double>::infinity(), 0};
    search_nearest(0, q, best);
    return {best.index, std::sqrt(best.d2)};
  }

  /// Up to k neighbors sorted by increasing distance.
  std::vector<Neighbor> k_nearest(const Vector3& q, std::size_t k) const {
    if (points_.empty()) throw std::logic_error("KdTree::k_nearest on empty cloud");
    std::vector<Candidate> heap;
    heap.reserve(k + 1);
    if (k > 0) search_knn(0, q, k, heap);
    std::sort_heap(heap.begin(), heap.end());
    std::vector<Neighbor> out;
    out.reserve(heap.size());
    for (const auto& c : heap) out.push_back({c.index, std::sqrt(c.d2)});
    return out;
  }

 private:
  struct Candidate {
    double d2;
    std::size_t index;
    bool operator<(const Candidate& o) const {
      return d2 < o.d2 || (d2 == o.d2 && index < o.index);
    }
  };

  struct Node {
    int axis = -1;  // -1 marks a leaf
    double split = 0.0;
    std::uint32_t left = 0;
    std::uint32_t right = 0;
    std::uint32_t begin = 0;
    std::uint32_t end = 0;
  };

  std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    Node node;
    node.begin = begin;
    node.end = end;
    if (end - begin <= leaf_size_) {
      nodes_[id] = node;
      return id;
    }
    Vector3 lo = Vector3::Constant(std::numeric_limits<double>::infinity());
    Vector3 hi = -lo;
    for (std::uint32_t i = begin; i < end; ++i) {
      lo = lo.cwiseMin(points_[order_[i]]);
      hi = hi.cwiseMax(points_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::uint32_t mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       return points_[a][axis] < points_[b][axis];
                     });
    node.axis = axis;
    node.split = points_[order_[mid]][axis];
    node.left = build(begin, mid);
    node.right = build(mid, end);
    nodes_[id] = node;
    return id;
  }

  void search_nearest(std::uint32_t id, const Vector3& q, Candidate& best) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Candidate c{(points_[order_[i]] - q).squaredNorm(), order_[i]};
        if (c < best) best = c;
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t first = diff < 0.0 ? node.left : node.right;
    const std::uint32_t second = diff < 0.0 ? node.right : node.left;
    search_nearest(first, q, best);
    if (diff * diff <= best.d2) search_nearest(second, q, best);
  }

  void search_knn(std::uint32_t id, const Vector3& q, std::size_t k,
                  std::vector<Candidate>& heap) const {
    const Node& node = nodes_[id];
    if (node.axis < 0) {
      for (std::uint32_t i = node.begin; i < node.end; ++i) {
        const Candidate c{(points_[order_[i]] - q).squaredNorm(), order_[i]};
        if (heap.size() < k) {
          heap.push_back(c);
          std::push_heap(heap.begin(), heap.end());
        } else if (c < heap.front()) {
          std::pop_heap(heap.begin(), heap.end());
          heap.back() = c;
          std::push_heap(heap.begin(), heap.end());
        }
      }
      return;
    }
    const double diff = q[node.axis] - node.split;
    const std::uint32_t first = diff < 0.0 ? node.left : node.right;
    const std::uint32_t second = diff < 0.0 ? node.right : node.left;
    search_knn(first, q, k, heap);
    if (heap.size() < k || diff * diff <= heap.front().d2) search_knn(second, q, k, heap);
  }

  std::vector<Vector3> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
  std::size_t leaf_size_ = 10;
};

inline constexpr std::size_t kDefaultNormalNeighbors = 10;

/// Fills normals, planarity and validity from the k nearest neighbors of
/// each point. Normals face the sensor origin. Neighborhoods whose middle
/// eigenvalue vanishes relative to the largest (collinear or coincident
/// points) are flagged invalid.
inline PointCloud estimate_normals(PointCloud cloud, const KdTree& tree,
                                   std::size_t k = kDefaultNormalNeighbors) {
  if (k < 3) throw std::invalid_argument("estimate_normals: k must be >= 3");
  if (cloud.size() < k + 1) {
    throw std::invalid_argument("estimate_normals: cloud has fewer than k+1 points");
  }
  if (tree.size() != cloud.size()) {
    throw std::invalid_argument("estimate_normals: index does not match cloud");
  }
  const std::size_t n = cloud.size();
  cloud.normals.assign(n, Vector3::Zero());
  cloud.planarity.assign(n, std::numeric_limits<double>::infinity());
  cloud.normal_valid.assign(n, 0);

  for (std::size_t i = 0; i < n; ++i) {
    const auto nbrs = tree.k_nearest(cloud.points[i], k + 1);
    Vector3 mean = Vector3::Zero();
    for (const auto& nb : nbrs) mean += cloud.points[nb.index];
    mean /= static_cast<double>(nbrs.size());
    Matrix3 cov = Matrix3::Zero();
    for (const auto& nb : nbrs) {
      const Vector3 d = cloud.points[nb.index] - mean;
      cov.noalias() += d * d.transpose();
    }
    cov /= static_cast<double>(nbrs.size());

    Eigen::SelfAdjointEigenSolver<Matrix3> es(cov);
    const Vector3 ev = es.eigenvalues();  // ascending
    if (!(ev(2) > 0.0) || ev(1) <= 1e-6 * ev(2)) continue;

    Vector3 normal = es.eigenvectors().col(0).normalized();
    if (normal.dot(cloud.sensor_origin - cloud.points[i]) < 0.0) normal = -normal;
    cloud.normals[i] = normal;
    cloud.planarity[i] = std::sqrt(std::max(ev(0), 0.0));
    cloud.normal_valid[i] = 1;
  }
  return cloud;
}

inline PointCloud estimate_normals(PointCloud cloud, std::size_t k = kDefaultNormalNeighbors) {
  const KdTree tree(cloud.points);
  return estimate_normals(std::move(cloud), tree, k);
}

struct SampleResult {
  std::vector<std::size_t> indices;
  /// Fewer eligible points than requested; all of them were returned.
  bool shortfall = false;
};

inline constexpr double kDefaultPlanarityMax = 0.005;

/// Bucket of a normal for normal-space sampling: the axis of its largest
/// absolute component, folded into n_buckets (1..3) buckets.
inline std::size_t normal_bucket(const Vector3& n, std::size_t n_buckets) {
  int axis = 0;
  n.cwiseAbs().maxCoeff(&axis);
  return std::min<std::size_t>(static_cast<std::size_t>(axis), n_buckets - 1);
}

/// Normal-space sampling. Points with an invalid normal or a planarity
/// residual above planarity_max are ineligible. The remaining points are
/// bucketed by dominant normal axis and drawn round-robin across buckets,
/// uniformly without replacement inside each bucket. Exhausted buckets drop
/// out of the rotation.
inline SampleResult normal_space_sample(const PointCloud& cloud, std::size_t n_select,
                                        std::size_t n_buckets, double planarity_max,
                                        std::mt19937_64& rng) {
  if (!cloud.has_normals()) {
    throw std::invalid_argument("normal_space_sample: normals not estimated");
  }
  if (n_buckets < 1 || n_buckets > 3) {
    throw std::invalid_argument("normal_space_sample: n_buckets must be in [1, 3]");
  }
  std::vector<std::vector<std::size_t>> buckets(n_buckets);
  std::size_t eligible = 0;
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    if (!cloud.valid_normal(i)) continue;
    if (!cloud.planarity.empty() && !(cloud.planarity[i] <= planarity_max)) continue;
    buckets[normal_bucket(cloud.normals[i], n_buckets)].push_back(i);
    ++eligible;
  }

  SampleResult out;
  out.shortfall = eligible < n_select;
  const std::size_t target = std::min(eligible, n_select);
  out.indices.reserve(target);
  std::vector<std::size_t> taken(n_buckets, 0);
  while (out.indices.size() < target) {
    for (std::size_t b = 0; b < n_buckets && out.indices.size() < target; ++b) {
      auto& bucket = buckets[b];
      std::size_t& pos = taken[b];
      if (pos >= bucket.size()) continue;
      std::uniform_int_distribution<std::size_t> pick(pos, bucket.size() - 1);
      std::swap(bucket[pos], bucket[pick(rng)]);
      out.indices.push_back(bucket[pos]);
      ++pos;
    }
  }
  return out;
}

}  // namespace smloc
