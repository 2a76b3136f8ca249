#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "probforest/forest.hpp"

namespace oracle {

/// Indices of the in-bag cases routed through each node of `tree`.
inline std::vector<std::vector<std::size_t>> node_members(const probforest::forest::Tree& tree,
                                                          const probforest::Matrix& x,
                                                          std::span<const std::uint32_t> weights) {
  std::vector<std::vector<std::size_t>> members(tree.node_count());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (weights[i] == 0) continue;
    std::size_t node = 0;
    members[0].push_back(i);
    while (!tree.node(node).is_leaf) {
      const auto v = tree.node(node);
      node = x(i, static_cast<std::size_t>(v.split.feature)) <= v.split.threshold ? v.left : v.right;
      members[node].push_back(i);
    }
  }
  return members;
}

}  // namespace oracle
