#pragma once

// Synthetic modular networks and event streams. Every generated quantity is a
// pure function of the seeds passed in, so streams regenerate bit-identically.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_set>
#include <vector>

#include "sketchmem/errors.hpp"
#include "sketchmem/random.hpp"
#include "sketchmem/record.hpp"
#include "sketchmem/registry.hpp"

namespace sketchmem::simnet {

enum class AttributeKind { kUnitGaussianDirection, kClustered };

struct AttributeDistribution {
  AttributeKind kind = AttributeKind::kUnitGaussianDirection;
  std::size_t clusters = 4;  // T type clusters per module
  double noise = 0.1;        // within-cluster noise, relative to the unit prototype
};

struct NetworkParams {
  std::size_t modules = 64;
  std::size_t output_dim = 8;
  std::size_t depth = 1;  // 1 = roots only
  std::size_t fan_in_min = 2;
  std::size_t fan_in_max = 2;
  std::size_t k_fired_min = 1;
  std::size_t k_fired_max = 4;
  AttributeDistribution attributes;
  bool dag_sharing = false;  // occasionally attach one child under two parents
  std::uint64_t seed = 0;

  void validate() const {
    require(modules >= 1, ErrorKind::kConfig, "network needs at least one module");
    require(output_dim >= 1, ErrorKind::kConfig, "output_dim must be >= 1");
    require(depth >= 1, ErrorKind::kConfig, "depth must be >= 1");
    require(k_fired_min >= 1 && k_fired_min <= k_fired_max, ErrorKind::kConfig, "invalid k_fired range");
    require(k_fired_max <= modules, ErrorKind::kConfig, "k_fired_max exceeds module count");
    require(fan_in_min <= fan_in_max, ErrorKind::kConfig, "invalid fan-in range");
    require(fan_in_max < modules, ErrorKind::kConfig, "fan-in must leave room for distinct child modules");
    require(attributes.noise >= 0.0, ErrorKind::kConfig, "attribute noise must be >= 0");
    require(attributes.kind != AttributeKind::kClustered || attributes.clusters >= 1, ErrorKind::kConfig,
            "clustered attributes need at least one cluster");
  }
};

inline ModuleRegistry gen_network(const NetworkParams& params) {
  params.validate();
  ModuleRegistry registry;
  for (std::size_t i = 0; i < params.modules; ++i) {
    registry.add({static_cast<ModuleId>(i), params.output_dim, "module-" + std::to_string(i)});
  }
  return registry;
}

inline Eigen::VectorXd random_unit(Stream& rng, std::size_t dim) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(dim));
  for (auto& x : v) x = rng.normal();
  const double n = v.norm();
  return n > 0.0 ? Eigen::VectorXd(v / n) : random_unit(rng, dim);
}

/// Type prototypes of one module: unit vectors, mutually orthogonal for the
/// first min(T, d_x) of them.
inline std::vector<Eigen::VectorXd> module_prototypes(const NetworkParams& params, ModuleId id, std::size_t dim) {
  Stream rng = Stream::derive(params.seed, "simnet/prototype", id);
  std::vector<Eigen::VectorXd> out;
  for (std::size_t t = 0; t < params.attributes.clusters; ++t) {
    Eigen::VectorXd v = random_unit(rng, dim);
    if (t < dim) {
      for (const auto& prev : out) v -= prev.dot(v) * prev;
      v.normalize();
    }
    out.push_back(std::move(v));
  }
  return out;
}

inline Eigen::VectorXd sample_attribute(const NetworkParams& params, ModuleId id, std::size_t dim, Stream& rng) {
  if (params.attributes.kind == AttributeKind::kUnitGaussianDirection) return random_unit(rng, dim);
  const auto prototypes = module_prototypes(params, id, dim);
  const auto& p = prototypes[rng.below(prototypes.size())];
  Eigen::VectorXd x = p;
  const double per_coord = params.attributes.noise / std::sqrt(static_cast<double>(dim));
  for (auto& v : x) v += per_coord * rng.normal();
  return x.normalized();
}

namespace detail {

inline std::vector<ModuleId> sample_distinct(Stream& rng, std::vector<ModuleId> pool, std::size_t count,
                                             const std::unordered_set<ModuleId>& exclude = {}) {
  std::erase_if(pool, [&](ModuleId m) { return exclude.contains(m); });
  count = std::min(count, pool.size());
  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(count);
  return pool;
}

}  // namespace detail

/// Samples k_fired distinct root modules and grows each into a tree of at
/// most `depth` levels, siblings using distinct modules.
inline ComputationRecord gen_event(const ModuleRegistry& registry, const NetworkParams& params, std::uint64_t seed) {
  params.validate();
  require(!registry.empty(), ErrorKind::kInvalidInput, "registry is empty");
  Stream rng = Stream::derive(params.seed, "simnet/event", seed);
  const auto ids = registry.ids();
  ComputationRecord record;
  const auto k = static_cast<std::size_t>(
      rng.between(static_cast<std::int64_t>(params.k_fired_min),
                  static_cast<std::int64_t>(std::min(params.k_fired_max, ids.size()))));

  auto add_node = [&](ModuleId module) {
    const NodeId id = record.nodes.size();
    record.nodes.push_back({id, module, sample_attribute(params, module, registry.get(module).output_dim, rng), {}});
    return id;
  };

  std::vector<NodeId> frontier;
  for (ModuleId m : detail::sample_distinct(rng, ids, k)) {
    const NodeId n = add_node(m);
    record.roots.push_back(n);
    frontier.push_back(n);
  }
  for (std::size_t level = 1; level < params.depth; ++level) {
    std::vector<NodeId> next;
    for (NodeId parent : frontier) {
      const auto fan = static_cast<std::size_t>(rng.between(static_cast<std::int64_t>(params.fan_in_min),
                                                            static_cast<std::int64_t>(params.fan_in_max)));
      const ModuleId parent_module = record.nodes[parent].module_id;
      for (ModuleId m : detail::sample_distinct(rng, ids, fan, {parent_module})) {
        const NodeId child = add_node(m);
        record.nodes[parent].children.push_back(child);
        next.push_back(child);
      }
    }
    if (params.dag_sharing) {
      for (std::size_t i = 1; i < frontier.size(); ++i) {
        auto& prev = record.nodes[frontier[i - 1]];
        auto& cur = record.nodes[frontier[i]];
        if (prev.children.empty() || !rng.bernoulli(0.5)) continue;
        const NodeId shared = prev.children.front();
        const ModuleId shared_module = record.nodes[shared].module_id;
        const bool clash = shared_module == cur.module_id ||
                           std::any_of(cur.children.begin(), cur.children.end(),
                                       [&](NodeId c) { return record.nodes[c].module_id == shared_module; });
        if (!clash) cur.children.push_back(shared);
      }
    }
    frontier = std::move(next);
  }
  return record;
}

struct Entity {
  std::uint64_t entity_id = 0;
  ModuleId module_id = 0;
  Eigen::VectorXd attribute;  // persistent across every event of a stream
};

using EntityRoster = std::vector<Entity>;

inline EntityRoster make_roster(const ModuleRegistry& registry, const NetworkParams& params, std::size_t count,
                                std::uint64_t seed) {
  Stream rng = Stream::derive(params.seed, "simnet/roster", seed);
  EntityRoster roster;
  const auto modules = detail::sample_distinct(rng, registry.ids(), count);
  for (std::size_t i = 0; i < count; ++i) {
    const ModuleId m = modules[i % modules.size()];
    roster.push_back({i, m, sample_attribute(params, m, registry.get(m).output_dim, rng)});
  }
  return roster;
}

/// Adds the entity as a leaf root. A root already using the entity's module
/// is replaced; otherwise, if the record is at k_cap roots, the oldest root is
/// evicted (injected entities are appended, so generated roots go first).
/// Nodes no longer reachable are dropped and ids re-packed.
inline void inject_entity(ComputationRecord& record, const Entity& entity, std::size_t k_cap) {
  auto& roots = record.roots;
  auto same_module = std::find_if(roots.begin(), roots.end(),
                                  [&](NodeId r) { return record.node(r).module_id == entity.module_id; });
  if (same_module != roots.end()) {
    roots.erase(same_module);
  } else if (roots.size() >= k_cap && !roots.empty()) {
    roots.erase(roots.begin());
  }
  const NodeId fresh = record.nodes.empty() ? 0 : record.nodes.back().node_id + 1;
  record.nodes.push_back({fresh, entity.module_id, entity.attribute, {}});
  roots.push_back(fresh);

  const auto idx = record.index();
  std::vector<bool> live(record.nodes.size(), false);
  std::vector<NodeId> stack(roots.begin(), roots.end());
  while (!stack.empty()) {
    const std::size_t i = idx.at(stack.back());
    stack.pop_back();
    if (live[i]) continue;
    live[i] = true;
    for (NodeId c : record.nodes[i].children) stack.push_back(c);
  }
  std::vector<RecordNode> kept;
  std::unordered_map<NodeId, NodeId> renumber;
  for (std::size_t i = 0; i < record.nodes.size(); ++i) {
    if (!live[i]) continue;
    renumber[record.nodes[i].node_id] = kept.size();
    kept.push_back(std::move(record.nodes[i]));
  }
  for (auto& n : kept) {
    n.node_id = renumber.at(n.node_id);
    for (auto& c : n.children) c = renumber.at(c);
  }
  for (auto& r : roots) r = renumber.at(r);
  record.nodes = std::move(kept);
}

struct StreamEvent {
  ComputationRecord record;
  std::vector<std::uint64_t> entities;  // ground-truth entity ids present
};

/// Each event independently includes each roster entity with probability
/// `recurrence`.
inline std::vector<StreamEvent> gen_event_stream(const ModuleRegistry& registry, const NetworkParams& params,
                                                 const EntityRoster& roster, std::size_t n_events,
                                                 double recurrence, std::uint64_t seed) {
  require(!roster.empty(), ErrorKind::kInvalidInput, "roster is empty");
  require(recurrence >= 0.0 && recurrence <= 1.0, ErrorKind::kInvalidInput, "recurrence must lie in [0, 1]");
  Stream rng = Stream::derive(params.seed, "simnet/stream", seed);
  std::vector<StreamEvent> out;
  out.reserve(n_events);
  for (std::size_t e = 0; e < n_events; ++e) {
    StreamEvent ev{gen_event(registry, params, mix_key(seed, e)), {}};
    for (const auto& entity : roster) {
      if (!rng.bernoulli(recurrence)) continue;
      inject_entity(ev.record, entity, params.k_fired_max);
      ev.entities.push_back(entity.entity_id);
    }
    // A later injection can evict an earlier entity once k_fired_max entities recur together.
    std::erase_if(ev.entities, [&](std::uint64_t id) {
      const auto& entity = *std::find_if(roster.begin(), roster.end(), [&](const Entity& e) { return e.entity_id == id; });
      return std::none_of(ev.record.roots.begin(), ev.record.roots.end(), [&](NodeId r) {
        const auto& n = ev.record.node(r);
        return n.module_id == entity.module_id && n.output == entity.attribute;
      });
    });
    out.push_back(std::move(ev));
  }
  return out;
}

}  // namespace sketchmem::simnet
