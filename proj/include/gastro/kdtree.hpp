#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include "gastro/types.hpp"

namespace gastro {

// Exact k-nearest-neighbour queries over a static 3D point set.
class KdTree {
 public:
  explicit KdTree(std::span<const Vec3> points);

  // The k nearest points as (distance, index), ascending by distance then
  // index. `exclude` removes one index (typically the query point itself).
  std::vector<std::pair<double, std::size_t>> Nearest(const Vec3& query, std::size_t k,
                                                      std::ptrdiff_t exclude = -1) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct Node {
    std::size_t begin = 0;
    std::size_t end = 0;
    int axis = -1;  // -1 for leaves
    double split = 0.0;
    int left = -1;
    int right = -1;
  };

  int Build(std::size_t begin, std::size_t end);

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

}  // namespace gastro
