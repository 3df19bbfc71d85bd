#include "gastro/kdtree.hpp"

#include <algorithm>
#include <queue>

namespace gastro {

namespace {
constexpr std::size_t kLeafSize = 8;
}

KdTree::KdTree(std::span<const Vec3> points) : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (!points_.empty()) Build(0, points_.size());
}

int KdTree::Build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(Node{begin, end});
  if (end - begin <= kLeafSize) return id;
  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  Eigen::Index axis = 0;
  (hi - lo).maxCoeff(&axis);
  if (hi[axis] == lo[axis]) return id;
  const std::size_t mid = begin + (end - begin) / 2;
  const auto a = static_cast<int>(axis);
  std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                   order_.begin() + static_cast<std::ptrdiff_t>(mid),
                   order_.begin() + static_cast<std::ptrdiff_t>(end),
                   [&](std::size_t x, std::size_t y) {
                     if (points_[x][a] != points_[y][a]) return points_[x][a] < points_[y][a];
                     return x < y;
                   });
  const double split = points_[order_[mid]][a];
  const int left = Build(begin, mid);
  const int right = Build(mid, end);
  nodes_[id].axis = a;
  nodes_[id].split = split;
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

std::vector<std::pair<double, std::size_t>> KdTree::Nearest(const Vec3& query, std::size_t k,
                                                            std::ptrdiff_t exclude) const {
  using Entry = std::pair<double, std::size_t>;  // squared distance, index
  std::priority_queue<Entry> heap;
  if (k == 0 || nodes_.empty()) return {};

  auto visit = [&](auto&& self, int node_id) -> void {
    const Node& node = nodes_[node_id];
    if (node.axis < 0) {
      for (std::size_t i = node.begin; i < node.end; ++i) {
        const std::size_t idx = order_[i];
        if (static_cast<std::ptrdiff_t>(idx) == exclude) continue;
        const Entry e{(points_[idx] - query).squaredNorm(), idx};
        if (heap.size() < k) {
          heap.push(e);
        } else if (e < heap.top()) {
          heap.pop();
          heap.push(e);
        }
      }
      return;
    }
    const double diff = query[node.axis] - node.split;
    const int near = diff < 0.0 ? node.left : node.right;
    const int far = diff < 0.0 ? node.right : node.left;
    self(self, near);
    if (heap.size() < k || diff * diff <= heap.top().first) self(self, far);
  };
  visit(visit, 0);

  std::vector<Entry> out;
  out.reserve(heap.size());
  while (!heap.empty()) {
    out.push_back(heap.top());
    heap.pop();
  }
  std::reverse(out.begin(), out.end());
  for (auto& e : out) e.first = std::sqrt(e.first);
  return out;
}

}  // namespace gastro
