#pragma once

// Layer and recursive sketch construction.
//
//   layer:  y    = sum_i R_i^attr x_i                          (unscaled)
//   node:   s(i) = a R_i^attr x_i + b R_i^rec c(i),  c(i) = (1/sqrt(#children)) sum_j s(j)
//           s(i) = R_i^attr x_i                      for childless nodes
//   event:  (1/sqrt(#roots)) sum_r s(r)

#include <Eigen/Dense>
#include <cmath>
#include <span>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sketchmem/errors.hpp"
#include "sketchmem/record.hpp"
#include "sketchmem/registry.hpp"
#include "sketchmem/sketch.hpp"

namespace sketchmem {

using ModuleOutput = std::pair<ModuleId, Eigen::VectorXd>;

inline Eigen::VectorXd embed_values(const SketchSpace& space, ModuleId id, const Eigen::VectorXd& x) {
  const auto r = space.attr(id);
  require(x.size() == r->cols(), ErrorKind::kInvalidInput,
          "output of module " + std::to_string(id) + " has dimension " + std::to_string(x.size()) + ", expected " +
              std::to_string(r->cols()));
  return (*r) * x;
}

inline Sketch embed_output(const SketchSpace& space, ModuleId id, const Eigen::VectorXd& x) {
  return Sketch(embed_values(space, id, x));
}

inline Sketch sketch_layer(const SketchSpace& space, std::span<const ModuleOutput> outputs) {
  std::unordered_set<ModuleId> seen;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.dim()));
  for (const auto& [id, x] : outputs) {
    require(seen.insert(id).second, ErrorKind::kInvalidInput, "duplicate module id " + std::to_string(id));
    y += embed_values(space, id, x);
  }
  return Sketch(std::move(y));
}

namespace detail {

// Memoized so shared DAG nodes are computed once per call.
inline const Eigen::VectorXd& node_values(const SketchSpace& space, const ComputationRecord& record,
                                          const std::unordered_map<NodeId, std::size_t>& idx, NodeId id,
                                          std::unordered_map<NodeId, Eigen::VectorXd>& memo) {
  if (auto it = memo.find(id); it != memo.end()) return it->second;
  auto pos = idx.find(id);
  require(pos != idx.end(), ErrorKind::kNotFound, "node " + std::to_string(id));
  const RecordNode& node = record.nodes[pos->second];
  Eigen::VectorXd s = embed_values(space, node.module_id, node.output);
  if (!node.children.empty()) {
    Eigen::VectorXd child_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.dim()));
    for (NodeId c : node.children) child_sum += node_values(space, record, idx, c, memo);
    child_sum /= std::sqrt(static_cast<double>(node.children.size()));
    const auto rec = space.rec(node.module_id);
    s = space.config().attr_weight * s + space.config().rec_weight * ((*rec) * child_sum);
  }
  return memo.emplace(id, std::move(s)).first->second;
}

}  // namespace detail

inline Sketch sketch_node(const SketchSpace& space, const ComputationRecord& record, NodeId node_id) {
  record.validate();
  const auto idx = record.index();
  std::unordered_map<NodeId, Eigen::VectorXd> memo;
  return Sketch(detail::node_values(space, record, idx, node_id, memo));
}

/// Canonical stored representation of an event.
inline Sketch sketch_event(const SketchSpace& space, const ComputationRecord& record) {
  require(!record.empty(), ErrorKind::kInvalidInput, "cannot sketch an empty record");
  record.validate();
  const auto idx = record.index();
  std::unordered_map<NodeId, Eigen::VectorXd> memo;
  Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.dim()));
  for (NodeId r : record.roots) y += detail::node_values(space, record, idx, r, memo);
  y /= std::sqrt(static_cast<double>(record.roots.size()));
  return Sketch(std::move(y));
}

}  // namespace sketchmem
