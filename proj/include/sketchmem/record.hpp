#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "sketchmem/errors.hpp"
#include "sketchmem/registry.hpp"

namespace sketchmem {

using NodeId = std::uint64_t;

struct RecordNode {
  NodeId node_id = 0;
  ModuleId module_id = 0;
  Eigen::VectorXd output;
  std::vector<NodeId> children;
};

/// Ground-truth DAG of fired modules.
struct ComputationRecord {
  std::vector<RecordNode> nodes;
  std::vector<NodeId> roots;

  [[nodiscard]] bool empty() const noexcept { return nodes.empty() || roots.empty(); }

  [[nodiscard]] std::unordered_map<NodeId, std::size_t> index() const {
    std::unordered_map<NodeId, std::size_t> idx;
    idx.reserve(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) idx.emplace(nodes[i].node_id, i);
    return idx;
  }

  [[nodiscard]] const RecordNode& node(NodeId id) const {
    for (const auto& n : nodes) {
      if (n.node_id == id) return n;
    }
    fail(ErrorKind::kNotFound, "node " + std::to_string(id));
  }

  /// Throws kInvalidInput unless node ids are unique, every referenced id
  /// exists, the child relation is acyclic, and (if given) |roots| <= k_max.
  void validate(std::optional<std::size_t> k_max = std::nullopt) const {
    const auto idx = index();
    require(idx.size() == nodes.size(), ErrorKind::kInvalidInput, "duplicate node id");
    for (const auto& n : nodes) {
      for (NodeId c : n.children) {
        require(idx.contains(c), ErrorKind::kInvalidInput, "child " + std::to_string(c) + " does not exist");
      }
    }
    for (NodeId r : roots) require(idx.contains(r), ErrorKind::kInvalidInput, "root " + std::to_string(r) + " does not exist");
    if (k_max) require(roots.size() <= *k_max, ErrorKind::kInvalidInput, "more fired roots than k_max");

    // 0 = unvisited, 1 = on stack, 2 = done
    std::vector<std::uint8_t> state(nodes.size(), 0);
    std::vector<std::pair<std::size_t, std::size_t>> stack;
    for (std::size_t start = 0; start < nodes.size(); ++start) {
      if (state[start]) continue;
      stack.emplace_back(start, 0);
      state[start] = 1;
      while (!stack.empty()) {
        auto& [at, next] = stack.back();
        const auto& children = nodes[at].children;
        if (next == children.size()) {
          state[at] = 2;
          stack.pop_back();
          continue;
        }
        const std::size_t child = idx.at(children[next++]);
        require(state[child] != 1, ErrorKind::kInvalidInput, "cycle in computation record");
        if (state[child] == 0) {
          state[child] = 1;
          stack.emplace_back(child, 0);
        }
      }
    }
  }

  /// Number of levels below and including the deepest root.
  [[nodiscard]] std::size_t depth() const {
    const auto idx = index();
    std::vector<std::size_t> memo(nodes.size(), 0);
    auto level = [&](auto&& self, std::size_t i) -> std::size_t {
      if (memo[i]) return memo[i];
      std::size_t best = 0;
      for (NodeId c : nodes[i].children) best = std::max(best, self(self, idx.at(c)));
      return memo[i] = best + 1;
    };
    std::size_t d = 0;
    for (NodeId r : roots) d = std::max(d, level(level, idx.at(r)));
    return d;
  }
};

}  // namespace sketchmem
