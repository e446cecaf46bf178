#pragma once

// New-concept detection: residuals that no registered module explains are
// pooled, clustered, and stable clusters promoted to new scalar modules.

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "sketchmem/errors.hpp"
#include "sketchmem/recovery.hpp"
#include "sketchmem/registry.hpp"

namespace sketchmem {

struct PoolEntry {
  std::uint64_t record_id = 0;
  Eigen::VectorXd residual;  // unit norm
  double residual_ratio = 0.0;
  std::int64_t timestamp = 0;
};

class ResidualPool {
 public:
  explicit ResidualPool(double rho = 0.3, std::size_t capacity = 10000) : rho_(rho), capacity_(capacity) {
    require(rho >= 0.0 && rho < 1.0, ErrorKind::kConfig, "admission threshold must lie in [0, 1)");
    require(capacity >= 1, ErrorKind::kConfig, "pool capacity must be >= 1");
  }

  [[nodiscard]] double rho() const noexcept { return rho_; }
  [[nodiscard]] std::size_t capacity() const noexcept { return capacity_; }
  [[nodiscard]] std::size_t size() const noexcept { return entries_.size(); }
  [[nodiscard]] bool empty() const noexcept { return entries_.empty(); }
  [[nodiscard]] const std::deque<PoolEntry>& entries() const noexcept { return entries_; }

  [[nodiscard]] bool admits(double residual_ratio) const noexcept { return residual_ratio > rho_; }

  /// Admits the normalized residual iff its ratio exceeds rho.
  bool admit(std::uint64_t record_id, const DecodedLayer& decoded, std::int64_t timestamp = 0) {
    if (!admits(decoded.residual_ratio)) return false;
    const double norm = decoded.residual.norm();
    if (norm == 0.0) return false;
    if (entries_.size() == capacity_) entries_.pop_front();
    entries_.push_back({record_id, decoded.residual.values() / norm, decoded.residual_ratio, timestamp});
    return true;
  }

 private:
  double rho_;
  std::size_t capacity_;
  std::deque<PoolEntry> entries_;
};

inline bool pool_admit(ResidualPool& pool, std::uint64_t record_id, const DecodedLayer& decoded,
                       std::int64_t timestamp = 0) {
  return pool.admit(record_id, decoded, timestamp);
}

struct ConceptCandidate {
  Eigen::VectorXd centroid;  // unit
  std::vector<std::uint64_t> members;
  double cohesion = 0.0;  // mean member-to-centroid cosine
};

/// Single-pass leader clustering in admission order. An entry joins the first
/// cluster whose centroid is within cosine tau_c; centroids are the running
/// normalized mean of their members.
inline std::vector<ConceptCandidate> cluster_pool(const ResidualPool& pool, double tau_c, std::size_t m_min) {
  require(tau_c > 0.0 && tau_c < 1.0 + 1e-12, ErrorKind::kInvalidInput, "tau_c must lie in (0, 1]");
  require(m_min >= 2, ErrorKind::kInvalidInput, "m_min must be >= 2");
  struct Cluster {
    Eigen::VectorXd sum;
    Eigen::VectorXd centroid;
    std::vector<std::size_t> entries;
  };
  std::vector<Cluster> clusters;
  const auto& entries = pool.entries();
  for (std::size_t e = 0; e < entries.size(); ++e) {
    const auto& v = entries[e].residual;
    Cluster* home = nullptr;
    for (auto& c : clusters) {
      if (c.centroid.dot(v) >= tau_c - 1e-12) {
        home = &c;
        break;
      }
    }
    if (home == nullptr) {
      clusters.push_back({v, v, {}});
      home = &clusters.back();
    } else {
      home->sum += v;
      const double n = home->sum.norm();
      if (n > 0.0) home->centroid = home->sum / n;
    }
    home->entries.push_back(e);
  }

  std::vector<ConceptCandidate> out;
  for (const auto& c : clusters) {
    if (c.entries.size() < m_min) continue;
    ConceptCandidate cand{c.centroid, {}, 0.0};
    for (std::size_t e : c.entries) {
      cand.members.push_back(entries[e].record_id);
      cand.cohesion += c.centroid.dot(entries[e].residual);
    }
    cand.cohesion = std::min(1.0, cand.cohesion / static_cast<double>(c.entries.size()));
    out.push_back(std::move(cand));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const ConceptCandidate& a, const ConceptCandidate& b) { return a.members.size() > b.members.size(); });
  return out;
}

/// Registers the centroid as a new d_x = 1 module and returns its id.
inline ModuleId promote_concept(ModuleRegistry& registry, const ConceptCandidate& candidate, std::string label = {}) {
  require(candidate.centroid.size() > 0, ErrorKind::kInvalidInput, "candidate has no centroid");
  if (label.empty()) label = "concept";
  return registry.add_atom_module(candidate.centroid, std::move(label));
}

}  // namespace sketchmem
