#pragma once

// Sketch vectors and their algebra: weighted combination, coordinate erasure,
// mask-aware cosine similarity, and the SKCH binary encoding.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "sketchmem/binary_io.hpp"
#include "sketchmem/errors.hpp"
#include "sketchmem/random.hpp"

namespace sketchmem {

enum class ErasureFill { kMasked };

struct SketchConfig {
  std::size_t sketch_dim = 1024;
  std::uint64_t global_seed = 0;
  double attr_weight = M_SQRT1_2;
  double rec_weight = M_SQRT1_2;
  ErasureFill erasure_fill = ErasureFill::kMasked;

  void validate() const {
    require(sketch_dim >= 1, ErrorKind::kConfig, "sketch_dim must be >= 1");
    require(std::abs(attr_weight * attr_weight + rec_weight * rec_weight - 1.0) <= 1e-9, ErrorKind::kConfig,
            "attr_weight^2 + rec_weight^2 must equal 1");
  }

  friend bool operator==(const SketchConfig&, const SketchConfig&) = default;
};

class Sketch {
 public:
  Sketch() = default;

  explicit Sketch(std::size_t dim) : values_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim))) {}

  explicit Sketch(Eigen::VectorXd values) : values_(std::move(values)) { norm_ = values_.norm(); }

  /// mask[i] != 0 retains coordinate i; masked coordinates are zeroed.
  Sketch(Eigen::VectorXd values, std::vector<std::uint8_t> mask) : values_(std::move(values)) {
    require(mask.size() == static_cast<std::size_t>(values_.size()), ErrorKind::kInvalidInput,
            "mask length does not match sketch dimension");
    bool all_retained = true;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      mask[i] = mask[i] ? 1 : 0;
      if (!mask[i]) {
        values_[static_cast<Eigen::Index>(i)] = 0.0;
        all_retained = false;
      }
    }
    if (!all_retained) mask_ = std::move(mask);
    norm_ = values_.norm();
  }

  [[nodiscard]] std::size_t dim() const noexcept { return static_cast<std::size_t>(values_.size()); }
  [[nodiscard]] const Eigen::VectorXd& values() const noexcept { return values_; }
  [[nodiscard]] double norm() const noexcept { return norm_; }
  [[nodiscard]] bool has_mask() const noexcept { return mask_.has_value(); }
  [[nodiscard]] const std::optional<std::vector<std::uint8_t>>& mask() const noexcept { return mask_; }

  [[nodiscard]] bool retained(std::size_t i) const noexcept { return !mask_ || (*mask_)[i] != 0; }

  [[nodiscard]] std::size_t retained_count() const noexcept {
    if (!mask_) return dim();
    return static_cast<std::size_t>(std::count(mask_->begin(), mask_->end(), std::uint8_t{1}));
  }

  [[nodiscard]] std::vector<Eigen::Index> retained_indices() const {
    std::vector<Eigen::Index> idx;
    idx.reserve(retained_count());
    for (std::size_t i = 0; i < dim(); ++i) {
      if (retained(i)) idx.push_back(static_cast<Eigen::Index>(i));
    }
    return idx;
  }

  [[nodiscard]] Sketch scaled(double factor) const {
    Sketch out = *this;
    out.values_ *= factor;
    out.norm_ = out.values_.norm();
    return out;
  }

  /// Same mask, new values (masked coordinates forced to zero).
  [[nodiscard]] Sketch with_values(Eigen::VectorXd values) const {
    if (!mask_) return Sketch(std::move(values));
    return Sketch(std::move(values), *mask_);
  }

  friend bool operator==(const Sketch& a, const Sketch& b) {
    return a.values_.size() == b.values_.size() && a.values_ == b.values_ && a.mask_ == b.mask_;
  }

 private:
  Eigen::VectorXd values_;
  std::optional<std::vector<std::uint8_t>> mask_;
  double norm_ = 0.0;
};

/// Weighted sum. A coordinate survives only if every input retains it.
inline Sketch combine(std::span<const Sketch> sketches, std::span<const double> weights) {
  require(sketches.size() == weights.size(), ErrorKind::kInvalidInput, "combine: sketch/weight count mismatch");
  require(!sketches.empty(), ErrorKind::kInvalidInput, "combine: no sketches");
  const std::size_t d = sketches.front().dim();
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  std::vector<std::uint8_t> mask(d, 1);
  bool any_mask = false;
  for (std::size_t s = 0; s < sketches.size(); ++s) {
    require(sketches[s].dim() == d, ErrorKind::kInvalidInput, "combine: dimension mismatch");
    sum += weights[s] * sketches[s].values();
    if (sketches[s].has_mask()) {
      any_mask = true;
      const auto& m = *sketches[s].mask();
      for (std::size_t i = 0; i < d; ++i) mask[i] &= m[i];
    }
  }
  if (!any_mask) return Sketch(std::move(sum));
  return Sketch(std::move(sum), std::move(mask));
}

inline Sketch operator+(const Sketch& a, const Sketch& b) {
  const std::array<Sketch, 2> pair{a, b};
  const std::array<double, 2> ones{1.0, 1.0};
  return combine(pair, ones);
}

/// Masks a uniformly random floor(f * |retained|) subset of the retained
/// coordinates. Applied twice, f1 then f2 leaves (1-f1)(1-f2)d +- 1 retained.
inline Sketch erase(const Sketch& sketch, double fraction, std::uint64_t seed) {
  require(fraction >= 0.0 && fraction < 1.0, ErrorKind::kInvalidInput, "erase: fraction must lie in [0, 1)");
  auto retained = sketch.retained_indices();
  const auto to_mask = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(retained.size())));
  if (to_mask == 0) return sketch;
  Stream rng = Stream::derive(seed, "erase");
  // Partial Fisher-Yates: the first to_mask slots become the erased set.
  for (std::size_t i = 0; i < to_mask; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng.below(retained.size() - i));
    std::swap(retained[i], retained[j]);
  }
  std::vector<std::uint8_t> mask = sketch.mask().value_or(std::vector<std::uint8_t>(sketch.dim(), 1));
  for (std::size_t i = 0; i < to_mask; ++i) mask[static_cast<std::size_t>(retained[i])] = 0;
  return Sketch(sketch.values(), std::move(mask));
}

/// Cosine over the intersection of retained coordinates. The d/|retained|
/// rescaling of each inner product cancels in the ratio.
inline double cosine(const Sketch& a, const Sketch& b) {
  require(a.dim() == b.dim(), ErrorKind::kInvalidInput, "cosine: dimension mismatch");
  double dot = 0.0, na = 0.0, nb = 0.0;
  if (!a.has_mask() && !b.has_mask()) {
    dot = a.values().dot(b.values());
    na = a.values().squaredNorm();
    nb = b.values().squaredNorm();
  } else {
    std::size_t common = 0;
    for (std::size_t i = 0; i < a.dim(); ++i) {
      if (!a.retained(i) || !b.retained(i)) continue;
      ++common;
      const double x = a.values()[static_cast<Eigen::Index>(i)];
      const double y = b.values()[static_cast<Eigen::Index>(i)];
      dot += x * y;
      na += x * x;
      nb += y * y;
    }
    require(common > 0, ErrorKind::kUndefinedSimilarity, "no commonly retained coordinates");
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
}

// ---------------------------------------------------------------------------
// SKCH: "SKCH" | version u16 | d u32 | mask flag u8 | d x f32 | ceil(d/8) mask bytes (LSB first)

inline constexpr std::uint16_t kSketchFormatVersion = 1;

inline void encode_sketch(ByteWriter& out, const Sketch& sketch) {
  out.put_bytes(std::string_view("SKCH"));
  out.put_u16(kSketchFormatVersion);
  out.put_u32(static_cast<std::uint32_t>(sketch.dim()));
  out.put_u8(sketch.has_mask() ? 1 : 0);
  for (double v : sketch.values()) out.put_f32(static_cast<float>(v));
  if (sketch.has_mask()) {
    const auto& mask = *sketch.mask();
    for (std::size_t byte = 0; byte < (mask.size() + 7) / 8; ++byte) {
      std::uint8_t packed = 0;
      for (std::size_t bit = 0; bit < 8 && byte * 8 + bit < mask.size(); ++bit) {
        if (mask[byte * 8 + bit]) packed |= static_cast<std::uint8_t>(1u << bit);
      }
      out.put_u8(packed);
    }
  }
}

inline Sketch decode_sketch(ByteReader& in) {
  in.expect_magic("SKCH");
  const auto version = in.get_u16();
  require(version == kSketchFormatVersion, ErrorKind::kFormat, "unsupported SKCH version");
  const auto d = in.get_u32();
  const auto flag = in.get_u8();
  require(flag <= 1, ErrorKind::kFormat, "bad SKCH mask flag");
  require(in.remaining() / 4 >= d, ErrorKind::kFormat, "truncated SKCH payload");
  Eigen::VectorXd values(static_cast<Eigen::Index>(d));
  for (std::uint32_t i = 0; i < d; ++i) values[i] = static_cast<double>(in.get_f32());
  if (!flag) return Sketch(std::move(values));
  std::vector<std::uint8_t> mask(d);
  auto packed = in.get_bytes((d + 7) / 8);
  for (std::uint32_t i = 0; i < d; ++i) mask[i] = (packed[i / 8] >> (i % 8)) & 1u;
  return Sketch(std::move(values), std::move(mask));
}

inline std::vector<std::uint8_t> sketch_to_bytes(const Sketch& sketch) {
  ByteWriter out;
  encode_sketch(out, sketch);
  return out.take();
}

inline Sketch sketch_from_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  Sketch s = decode_sketch(in);
  require(in.remaining() == 0, ErrorKind::kFormat, "trailing bytes after sketch");
  return s;
}

inline void save_sketch(const std::filesystem::path& path, const Sketch& sketch) {
  write_file_atomic(path, sketch_to_bytes(sketch));
}

inline Sketch load_sketch(const std::filesystem::path& path) {
  const auto bytes = read_file_bytes(path);
  return sketch_from_bytes(bytes);
}

/// Count-prefixed stream of SKCH records: count u64 followed by the sketches.
inline std::vector<std::uint8_t> sketch_stream_to_bytes(std::span<const Sketch> sketches) {
  ByteWriter out;
  out.put_u64(sketches.size());
  for (const auto& s : sketches) encode_sketch(out, s);
  return out.take();
}

inline std::vector<Sketch> sketch_stream_from_bytes(std::span<const std::uint8_t> bytes) {
  ByteReader in(bytes);
  const auto count = in.get_u64();
  std::vector<Sketch> out;
  for (std::uint64_t i = 0; i < count; ++i) out.push_back(decode_sketch(in));
  require(in.remaining() == 0, ErrorKind::kFormat, "trailing bytes after sketch stream");
  return out;
}

/// Rounds values to the f32 storage precision so persisted copies compare equal.
inline Sketch quantize_to_storage(const Sketch& sketch) {
  Eigen::VectorXd v = sketch.values().cast<float>().cast<double>();
  return sketch.with_values(std::move(v));
}

}  // namespace sketchmem
