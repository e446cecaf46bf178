#pragma once

// Sketch memory: stored event sketches with random-hyperplane LSH for
// approximate nearest-neighbor retrieval, component probes, and the implicit
// similarity-threshold knowledge graph.
//
// Reported similarities are always the exact mask-aware cosine; LSH only
// decides which records get verified.

#include <zlib.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "sketchmem/binary_io.hpp"
#include "sketchmem/errors.hpp"
#include "sketchmem/registry.hpp"
#include "sketchmem/sketch.hpp"
#include "sketchmem/sketching.hpp"

namespace sketchmem {

struct LshParams {
  std::uint32_t tables = 16;
  std::uint32_t hyperplanes = 12;
  std::uint64_t seed = 0;

  void validate() const {
    require(tables >= 1, ErrorKind::kConfig, "LSH needs at least one table");
    require(hyperplanes >= 1 && hyperplanes <= 64, ErrorKind::kConfig, "LSH hyperplanes per table must be in [1, 64]");
  }

  friend bool operator==(const LshParams&, const LshParams&) = default;
};

struct SketchRecord {
  std::uint64_t record_id = 0;
  Sketch sketch;
  std::int64_t timestamp = 0;  // milliseconds
  std::string metadata;        // opaque UTF-8 JSON
};

struct Hit {
  std::uint64_t record_id = 0;
  double similarity = 0.0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

struct KnowledgeGraphEdge {
  std::uint64_t a = 0;  // a < b
  std::uint64_t b = 0;
  double similarity = 0.0;

  friend bool operator==(const KnowledgeGraphEdge&, const KnowledgeGraphEdge&) = default;
};

struct QueryStats {
  std::size_t candidates = 0;  // records whose similarity was verified
};

inline constexpr std::uint16_t kIndexFormatVersion = 1;

class MemoryIndex {
 public:
  MemoryIndex(std::size_t dim, LshParams params) : dim_(dim), params_(params) {
    require(dim >= 1, ErrorKind::kConfig, "index dimension must be >= 1");
    params_.validate();
    planes_.reserve(params_.tables);
    for (std::uint32_t t = 0; t < params_.tables; ++t) {
      planes_.push_back(derive_matrix(params_.seed, t, MatrixRole::kLsh, params_.hyperplanes, dim_));
    }
    tables_.resize(params_.tables);
  }

  MemoryIndex(MemoryIndex&& other) noexcept = default;
  MemoryIndex& operator=(MemoryIndex&& other) noexcept = default;

  [[nodiscard]] std::size_t dim() const noexcept { return dim_; }
  [[nodiscard]] const LshParams& params() const noexcept { return params_; }

  [[nodiscard]] std::size_t size() const {
    std::shared_lock lock(*mu_);
    return records_.size();
  }

  /// Stores the record (values rounded to f32 storage precision) and buckets
  /// its signature in every table.
  std::uint64_t insert(SketchRecord record) {
    std::unique_lock lock(*mu_);
    require(record.sketch.dim() == dim_, ErrorKind::kInvalidInput, "sketch dimension does not match index");
    require(!by_id_.contains(record.record_id), ErrorKind::kInvalidInput,
            "duplicate record id " + std::to_string(record.record_id));
    record.sketch = quantize_to_storage(record.sketch);
    add_locked(std::move(record));
    return records_.back().record_id;
  }

  /// Auto-assigns the next free id.
  std::uint64_t insert(const Sketch& sketch, std::int64_t timestamp, std::string metadata = "{}") {
    std::uint64_t id = 0;
    {
      std::shared_lock lock(*mu_);
      id = next_id_;
    }
    return insert({id, sketch, timestamp, std::move(metadata)});
  }

  [[nodiscard]] SketchRecord record(std::uint64_t id) const {
    std::shared_lock lock(*mu_);
    auto it = by_id_.find(id);
    if (it == by_id_.end()) fail(ErrorKind::kNotFound, "record " + std::to_string(id));
    return records_[it->second];
  }

  [[nodiscard]] std::vector<std::uint64_t> signatures(std::uint64_t id) const {
    std::shared_lock lock(*mu_);
    auto it = by_id_.find(id);
    if (it == by_id_.end()) fail(ErrorKind::kNotFound, "record " + std::to_string(id));
    const auto begin = signatures_.begin() + static_cast<std::ptrdiff_t>(it->second * params_.tables);
    return {begin, begin + params_.tables};
  }

  [[nodiscard]] std::vector<std::uint64_t> signature_of(const Sketch& sketch) const {
    std::vector<std::uint64_t> sig(params_.tables);
    for (std::uint32_t t = 0; t < params_.tables; ++t) sig[t] = signature(t, sketch.values());
    return sig;
  }

  /// Top-k over the union of the probe's buckets, ranked by exact cosine
  /// (ties: older timestamp, then lower id).
  [[nodiscard]] std::vector<Hit> query(const Sketch& probe, std::size_t k, QueryStats* stats = nullptr) const {
    require(k >= 1, ErrorKind::kInvalidInput, "k must be >= 1");
    require(probe.dim() == dim_, ErrorKind::kInvalidInput, "probe dimension does not match index");
    std::shared_lock lock(*mu_);
    std::vector<std::size_t> candidates;
    std::unordered_set<std::size_t> seen;
    for (std::uint32_t t = 0; t < params_.tables; ++t) {
      auto it = tables_[t].find(signature(t, probe.values()));
      if (it == tables_[t].end()) continue;
      for (std::size_t idx : it->second) {
        if (seen.insert(idx).second) candidates.push_back(idx);
      }
    }
    if (stats) stats->candidates = candidates.size();
    return rank_locked(probe, candidates, k);
  }

  /// Linear scan with exact cosine: the recall oracle for query().
  [[nodiscard]] std::vector<Hit> exact_scan(const Sketch& probe, std::size_t k) const {
    require(k >= 1, ErrorKind::kInvalidInput, "k must be >= 1");
    require(probe.dim() == dim_, ErrorKind::kInvalidInput, "probe dimension does not match index");
    std::shared_lock lock(*mu_);
    std::vector<std::size_t> all(records_.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return rank_locked(probe, all, k);
  }

  /// Pairs with exact cosine >= tau among LSH bucket-mates. Pairs that share
  /// no bucket in any table are absent: the graph is approximate.
  [[nodiscard]] std::vector<KnowledgeGraphEdge> knowledge_graph(double tau) const {
    require(tau > 0.0 && tau <= 1.0, ErrorKind::kInvalidInput, "tau must lie in (0, 1]");
    std::shared_lock lock(*mu_);
    std::unordered_set<std::uint64_t> checked;
    std::vector<KnowledgeGraphEdge> edges;
    for (const auto& table : tables_) {
      for (const auto& [sig, members] : table) {
        for (std::size_t i = 0; i < members.size(); ++i) {
          for (std::size_t j = i + 1; j < members.size(); ++j) {
            const std::size_t lo = std::min(members[i], members[j]);
            const std::size_t hi = std::max(members[i], members[j]);
            if (!checked.insert((std::uint64_t{lo} << 32) | hi).second) continue;
            const auto sim = safe_cosine(records_[lo].sketch, records_[hi].sketch);
            if (!sim || *sim < tau) continue;
            const auto a = records_[lo].record_id;
            const auto b = records_[hi].record_id;
            edges.push_back({std::min(a, b), std::max(a, b), *sim});
          }
        }
      }
    }
    std::sort(edges.begin(), edges.end(), [](const auto& x, const auto& y) {
      return x.a != y.a ? x.a < y.a : x.b < y.b;
    });
    return edges;
  }

  [[nodiscard]] std::vector<std::uint8_t> to_bytes() const {
    std::shared_lock lock(*mu_);
    ByteWriter out;
    out.put_bytes(std::string_view("SKIX"));
    out.put_u16(kIndexFormatVersion);
    out.put_u32(params_.tables);
    out.put_u32(params_.hyperplanes);
    out.put_u64(params_.seed);
    out.put_u32(static_cast<std::uint32_t>(dim_));
    out.put_u64(records_.size());
    for (const auto& r : records_) {
      out.put_u64(r.record_id);
      out.put_i64(r.timestamp);
      out.put_u32(static_cast<std::uint32_t>(r.metadata.size()));
      out.put_bytes(r.metadata);
      encode_sketch(out, r.sketch);
    }
    const auto& payload = out.bytes();
    out.put_u32(static_cast<std::uint32_t>(crc32(0L, payload.data(), static_cast<uInt>(payload.size()))));
    return out.take();
  }

  static MemoryIndex from_bytes(std::span<const std::uint8_t> bytes) {
    require(bytes.size() >= 4, ErrorKind::kFormat, "truncated index file");
    ByteReader in(bytes);
    in.expect_magic("SKIX");
    const auto version = in.get_u16();
    require(version == kIndexFormatVersion, ErrorKind::kFormat, "unsupported index version " + std::to_string(version));
    LshParams params;
    params.tables = in.get_u32();
    params.hyperplanes = in.get_u32();
    params.seed = in.get_u64();
    const auto dim = in.get_u32();
    const auto count = in.get_u64();
    // Verify the checksum before trusting counts and lengths.
    const std::size_t payload_size = bytes.size() - 4;
    require(payload_size >= in.position(), ErrorKind::kFormat, "truncated index file");
    ByteReader tail(bytes.subspan(payload_size));
    const auto stored_crc = tail.get_u32();
    const auto actual_crc = static_cast<std::uint32_t>(crc32(0L, bytes.data(), static_cast<uInt>(payload_size)));
    require(stored_crc == actual_crc, ErrorKind::kFormat, "index checksum mismatch");
    try {
      params.validate();
    } catch (const Error& e) {
      fail(ErrorKind::kFormat, e.what());
    }
    MemoryIndex index(dim, params);
    ByteReader body(bytes.subspan(0, payload_size));
    (void)body.get_bytes(in.position());
    for (std::uint64_t i = 0; i < count; ++i) {
      SketchRecord r;
      r.record_id = body.get_u64();
      r.timestamp = body.get_i64();
      const auto len = body.get_u32();
      const auto meta = body.get_bytes(len);
      r.metadata.assign(meta.begin(), meta.end());
      r.sketch = decode_sketch(body);
      require(r.sketch.dim() == dim, ErrorKind::kFormat, "record dimension differs from index dimension");
      require(!index.by_id_.contains(r.record_id), ErrorKind::kFormat, "duplicate record id in index file");
      index.add_locked(std::move(r));
    }
    require(body.remaining() == 0, ErrorKind::kFormat, "trailing bytes in index file");
    return index;
  }

  void save(const std::filesystem::path& path) const { write_file_atomic(path, to_bytes()); }

  static MemoryIndex load(const std::filesystem::path& path) { return from_bytes(read_file_bytes(path)); }

 private:
  [[nodiscard]] std::uint64_t signature(std::uint32_t table, const Eigen::VectorXd& v) const {
    const Eigen::VectorXd proj = planes_[table] * v;
    std::uint64_t sig = 0;
    for (Eigen::Index h = 0; h < proj.size(); ++h) {
      if (proj[h] >= 0.0) sig |= std::uint64_t{1} << h;
    }
    return sig;
  }

  void add_locked(SketchRecord record) {
    const std::size_t idx = records_.size();
    for (std::uint32_t t = 0; t < params_.tables; ++t) {
      const auto sig = signature(t, record.sketch.values());
      signatures_.push_back(sig);
      tables_[t][sig].push_back(idx);
    }
    by_id_.emplace(record.record_id, idx);
    next_id_ = std::max(next_id_, record.record_id + 1);
    records_.push_back(std::move(record));
  }

  static std::optional<double> safe_cosine(const Sketch& a, const Sketch& b) {
    try {
      return cosine(a, b);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::kUndefinedSimilarity) return std::nullopt;
      throw;
    }
  }

  [[nodiscard]] std::vector<Hit> rank_locked(const Sketch& probe, const std::vector<std::size_t>& candidates,
                                             std::size_t k) const {
    struct Scored {
      double sim;
      std::int64_t timestamp;
      std::uint64_t id;
    };
    std::vector<Scored> scored;
    scored.reserve(candidates.size());
    for (std::size_t idx : candidates) {
      const auto& r = records_[idx];
      if (auto sim = safe_cosine(probe, r.sketch)) scored.push_back({*sim, r.timestamp, r.record_id});
    }
    const auto better = [](const Scored& x, const Scored& y) {
      if (x.sim != y.sim) return x.sim > y.sim;
      if (x.timestamp != y.timestamp) return x.timestamp < y.timestamp;
      return x.id < y.id;
    };
    const std::size_t keep = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(keep), scored.end(), better);
    std::vector<Hit> out;
    for (std::size_t i = 0; i < keep; ++i) out.push_back({scored[i].id, scored[i].sim});
    return out;
  }

  std::size_t dim_;
  LshParams params_;
  std::vector<Eigen::MatrixXd> planes_;  // H x d per table, re-derived from the hash seed
  std::vector<std::unordered_map<std::uint64_t, std::vector<std::size_t>>> tables_;
  std::vector<std::uint64_t> signatures_;  // records x tables
  std::vector<SketchRecord> records_;
  std::unordered_map<std::uint64_t, std::size_t> by_id_;
  std::uint64_t next_id_ = 0;
  std::unique_ptr<std::shared_mutex> mu_ = std::make_unique<std::shared_mutex>();
};

/// Partial-event probe a * R_module^attr x, then query. A zero attribute
/// yields no results.
inline std::vector<Hit> query_by_component(const MemoryIndex& index, const SketchSpace& space, ModuleId module_id,
                                           const Eigen::VectorXd& x, std::size_t k, QueryStats* stats = nullptr) {
  const Sketch probe = embed_output(space, module_id, x).scaled(space.config().attr_weight);
  if (probe.norm() == 0.0) return {};
  return index.query(probe, k, stats);
}

}  // namespace sketchmem
