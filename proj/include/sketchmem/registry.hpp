#pragma once

// Module metadata and the seed-derived embedding matrices attached to each
// module. Matrices are never stored on disk: any (seed, module, role, shape)
// re-derives bit-identically. An in-memory LRU cache amortizes derivation
// within a process.

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <tuple>
#include <unordered_map>
#include <vector>

#include "sketchmem/errors.hpp"
#include "sketchmem/random.hpp"
#include "sketchmem/sketch.hpp"

namespace sketchmem {

using ModuleId = std::uint32_t;

enum class MatrixRole : std::uint64_t {
  kAttr = 1,  // module output -> sketch space (d x d_x)
  kRec = 2,   // combined child sketch -> sketch space (d x d)
  kAug = 3,   // augmented collection element -> sketch space (d x d_aug)
  kLsh = 4,   // hyperplanes of one LSH table (H x d)
};

/// Entries i.i.d. N(0, 1/rows). Entry (r, c) depends only on
/// (seed, module_id, role, r, c), never on the requested shape beyond the
/// 1/rows scale, so blocks can be generated independently.
inline Eigen::MatrixXd derive_matrix(std::uint64_t seed, std::uint64_t module_id, MatrixRole role, std::size_t rows,
                                     std::size_t cols) {
  require(rows >= 1 && cols >= 1, ErrorKind::kInvalidInput, "derive_matrix: empty shape");
  const std::uint64_t key = mix_key(seed, module_id, static_cast<std::uint64_t>(role));
  const double scale = 1.0 / std::sqrt(static_cast<double>(rows));
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  for (std::size_t c = 0; c < cols; ++c) {
    double* col = m.col(static_cast<Eigen::Index>(c)).data();
    for (std::size_t r = 0; r < rows; r += 2) {
      const auto [g0, g1] = gaussian_pair(key, c, r / 2);
      col[r] = scale * g0;
      if (r + 1 < rows) col[r + 1] = scale * g1;
    }
  }
  return m;
}

inline Eigen::MatrixXd derive_matrix(const SketchConfig& config, ModuleId module_id, MatrixRole role, std::size_t rows,
                                     std::size_t cols) {
  return derive_matrix(config.global_seed, module_id, role, rows, cols);
}

using MatrixPtr = std::shared_ptr<const Eigen::MatrixXd>;

/// Thread-safe LRU cache of derived matrices with a byte budget.
class MatrixCache {
 public:
  explicit MatrixCache(std::size_t budget_bytes = std::size_t{1} << 30) : budget_(budget_bytes) {}

  MatrixPtr get(std::uint64_t seed, std::uint64_t module_id, MatrixRole role, std::size_t rows, std::size_t cols) {
    const Key key{seed, module_id, static_cast<std::uint64_t>(role), rows, cols};
    {
      std::lock_guard lock(mu_);
      if (auto it = index_.find(key); it != index_.end()) {
        lru_.splice(lru_.begin(), lru_, it->second);
        return it->second->second;
      }
    }
    auto matrix = std::make_shared<const Eigen::MatrixXd>(derive_matrix(seed, module_id, role, rows, cols));
    const std::size_t bytes = rows * cols * sizeof(double);
    if (bytes > budget_) return matrix;
    std::lock_guard lock(mu_);
    if (auto it = index_.find(key); it != index_.end()) return it->second->second;
    while (used_ + bytes > budget_ && !lru_.empty()) {
      const auto& victim = lru_.back();
      used_ -= bytes_of(victim.first);
      index_.erase(victim.first);
      lru_.pop_back();
    }
    lru_.emplace_front(key, matrix);
    index_[key] = lru_.begin();
    used_ += bytes;
    return matrix;
  }

  [[nodiscard]] std::size_t used_bytes() const {
    std::lock_guard lock(mu_);
    return used_;
  }

 private:
  using Key = std::tuple<std::uint64_t, std::uint64_t, std::uint64_t, std::size_t, std::size_t>;
  struct KeyHash {
    std::size_t operator()(const Key& k) const noexcept {
      return static_cast<std::size_t>(
          mix_key(std::get<0>(k), std::get<1>(k), std::get<2>(k), std::get<3>(k), std::get<4>(k)));
    }
  };
  static std::size_t bytes_of(const Key& k) { return std::get<3>(k) * std::get<4>(k) * sizeof(double); }

  std::size_t budget_;
  std::size_t used_ = 0;
  mutable std::mutex mu_;
  std::list<std::pair<Key, MatrixPtr>> lru_;
  std::unordered_map<Key, std::list<std::pair<Key, MatrixPtr>>::iterator, KeyHash> index_;
};

struct ModuleSpec {
  ModuleId module_id = 0;
  std::size_t output_dim = 1;
  std::string label;

  friend bool operator==(const ModuleSpec&, const ModuleSpec&) = default;
};

class ModuleRegistry {
 public:
  void add(ModuleSpec spec) {
    require(spec.output_dim >= 1, ErrorKind::kInvalidInput, "module output_dim must be >= 1");
    require(!specs_.contains(spec.module_id), ErrorKind::kInvalidInput,
            "duplicate module id " + std::to_string(spec.module_id));
    specs_.emplace(spec.module_id, std::move(spec));
  }

  /// Registers a scalar module whose attribute direction is the given unit
  /// atom instead of a seed-derived column. Returns the fresh id.
  ModuleId add_atom_module(Eigen::VectorXd atom, std::string label) {
    require(atom.size() > 0 && atom.norm() > 0.0, ErrorKind::kInvalidInput, "atom must be nonzero");
    ModuleId id = 0;
    if (!specs_.empty()) {
      const ModuleId last = specs_.rbegin()->first;
      require(last < std::numeric_limits<ModuleId>::max(), ErrorKind::kCapacity, "module id space exhausted");
      id = last + 1;
    }
    atom.normalize();
    add({id, 1, std::move(label)});
    atoms_.emplace(id, std::make_shared<const Eigen::MatrixXd>(std::move(atom)));
    return id;
  }

  [[nodiscard]] bool contains(ModuleId id) const { return specs_.contains(id); }

  [[nodiscard]] const ModuleSpec& get(ModuleId id) const {
    auto it = specs_.find(id);
    if (it == specs_.end()) fail(ErrorKind::kNotFound, "module " + std::to_string(id) + " not registered");
    return it->second;
  }

  [[nodiscard]] MatrixPtr atom(ModuleId id) const {
    auto it = atoms_.find(id);
    return it == atoms_.end() ? nullptr : it->second;
  }

  [[nodiscard]] std::vector<ModuleId> ids() const {
    std::vector<ModuleId> out;
    out.reserve(specs_.size());
    for (const auto& [id, spec] : specs_) out.push_back(id);
    return out;
  }

  [[nodiscard]] std::vector<ModuleSpec> specs() const {
    std::vector<ModuleSpec> out;
    for (const auto& [id, spec] : specs_) out.push_back(spec);
    return out;
  }

  [[nodiscard]] std::size_t size() const noexcept { return specs_.size(); }
  [[nodiscard]] bool empty() const noexcept { return specs_.empty(); }

 private:
  std::map<ModuleId, ModuleSpec> specs_;
  std::map<ModuleId, MatrixPtr> atoms_;
};

/// Config + registry + matrix cache: everything needed to sketch and decode.
/// Copies share the cache; the registry is copied by value.
class SketchSpace {
 public:
  SketchSpace(SketchConfig config, ModuleRegistry registry,
              std::shared_ptr<MatrixCache> cache = std::make_shared<MatrixCache>())
      : config_(config), registry_(std::move(registry)), cache_(std::move(cache)) {
    config_.validate();
  }

  [[nodiscard]] const SketchConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::size_t dim() const noexcept { return config_.sketch_dim; }
  [[nodiscard]] const ModuleRegistry& registry() const noexcept { return registry_; }
  ModuleRegistry& registry() noexcept { return registry_; }
  [[nodiscard]] const std::shared_ptr<MatrixCache>& cache() const noexcept { return cache_; }

  [[nodiscard]] std::size_t output_dim(ModuleId id) const { return registry_.get(id).output_dim; }

  /// d x d_x attribute matrix (the explicit atom for promoted modules).
  [[nodiscard]] MatrixPtr attr(ModuleId id) const {
    const auto& spec = registry_.get(id);
    if (auto atom = registry_.atom(id)) {
      require(static_cast<std::size_t>(atom->rows()) == dim(), ErrorKind::kInvalidInput,
              "atom dimension does not match sketch dimension");
      return atom;
    }
    return cache_->get(config_.global_seed, id, MatrixRole::kAttr, dim(), spec.output_dim);
  }

  /// d x d recursion matrix; defined for any id.
  [[nodiscard]] MatrixPtr rec(ModuleId id) const {
    return cache_->get(config_.global_seed, id, MatrixRole::kRec, dim(), dim());
  }

  [[nodiscard]] MatrixPtr derived(std::uint64_t id, MatrixRole role, std::size_t rows, std::size_t cols) const {
    return cache_->get(config_.global_seed, id, role, rows, cols);
  }

 private:
  SketchConfig config_;
  ModuleRegistry registry_;
  std::shared_ptr<MatrixCache> cache_;
};

}  // namespace sketchmem
