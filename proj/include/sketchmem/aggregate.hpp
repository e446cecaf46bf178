#pragma once

// Collection sketches: a multiset of same-typed items is sketched as
// R_type^aug * sum_j z_j, where each item x is lifted to the augmented vector
//
//   z = [ x  |  x (.) x  |  1  |  one_hot(bucket(<proj, x>)) ]
//
// keeping only the selected channels. Count, mean, variance, and histogram
// all fall out of one joint least-squares inversion of the augmented block.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "sketchmem/errors.hpp"
#include "sketchmem/registry.hpp"
#include "sketchmem/sketch.hpp"

namespace sketchmem {

struct ChannelSet {
  bool moment1 = true;
  bool moment2 = true;
  bool count = true;
  bool histogram = false;

  friend bool operator==(const ChannelSet&, const ChannelSet&) = default;
};

/// Buckets a 1-D projection of each item. edges.front() = -inf and
/// edges.back() = +inf; bucket b holds values in [edges[b], edges[b+1]).
struct Quantizer {
  Eigen::VectorXd direction;
  std::vector<double> edges;

  static Quantizer uniform(Eigen::VectorXd direction, double lo, double hi, std::size_t buckets) {
    require(buckets >= 1 && hi > lo, ErrorKind::kInvalidInput, "invalid uniform quantizer range");
    Quantizer q;
    q.direction = direction.normalized();
    q.edges.push_back(-std::numeric_limits<double>::infinity());
    for (std::size_t b = 1; b < buckets; ++b) {
      q.edges.push_back(lo + (hi - lo) * static_cast<double>(b) / static_cast<double>(buckets));
    }
    q.edges.push_back(std::numeric_limits<double>::infinity());
    q.validate();
    return q;
  }

  [[nodiscard]] std::size_t buckets() const noexcept { return edges.size() - 1; }

  void validate() const {
    require(direction.size() > 0 && std::abs(direction.norm() - 1.0) < 1e-9, ErrorKind::kInvalidInput,
            "quantizer direction must be a unit vector");
    require(edges.size() >= 2, ErrorKind::kInvalidInput, "quantizer needs at least one bucket");
    require(edges.front() == -std::numeric_limits<double>::infinity() &&
                edges.back() == std::numeric_limits<double>::infinity(),
            ErrorKind::kInvalidInput, "quantizer edges must start at -inf and end at +inf");
    for (std::size_t i = 1; i < edges.size(); ++i) {
      require(edges[i] > edges[i - 1], ErrorKind::kInvalidInput, "quantizer edges must be strictly increasing");
    }
  }

  [[nodiscard]] std::size_t bucket(const Eigen::VectorXd& x) const {
    const double v = direction.dot(x);
    const auto it = std::upper_bound(edges.begin() + 1, edges.end() - 1, v);
    return static_cast<std::size_t>(it - (edges.begin() + 1));
  }
};

/// Offsets of each channel inside the augmented element vector.
struct ChannelLayout {
  std::size_t output_dim = 0;
  ChannelSet channels;
  std::size_t buckets = 0;

  [[nodiscard]] std::size_t moment1_offset() const noexcept { return 0; }
  [[nodiscard]] std::size_t moment2_offset() const noexcept { return channels.moment1 ? output_dim : 0; }
  [[nodiscard]] std::size_t count_offset() const noexcept {
    return moment2_offset() + (channels.moment2 ? output_dim : 0);
  }
  [[nodiscard]] std::size_t histogram_offset() const noexcept { return count_offset() + (channels.count ? 1 : 0); }
  [[nodiscard]] std::size_t augmented_dim() const noexcept {
    return histogram_offset() + (channels.histogram ? buckets : 0);
  }
};

struct CollectionSketch {
  Sketch sketch;
  ModuleId type_id = 0;
  ChannelSet channels;
  std::optional<Quantizer> quantizer;

  [[nodiscard]] ChannelLayout layout(std::size_t output_dim) const {
    return {output_dim, channels, quantizer ? quantizer->buckets() : 0};
  }
};

inline Eigen::VectorXd lift_item(const ChannelLayout& layout, const Eigen::VectorXd& x,
                                 const std::optional<Quantizer>& quantizer) {
  Eigen::VectorXd z = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.augmented_dim()));
  const auto dx = static_cast<Eigen::Index>(layout.output_dim);
  if (layout.channels.moment1) z.segment(static_cast<Eigen::Index>(layout.moment1_offset()), dx) = x;
  if (layout.channels.moment2) {
    z.segment(static_cast<Eigen::Index>(layout.moment2_offset()), dx) = x.array().square().matrix();
  }
  if (layout.channels.count) z[static_cast<Eigen::Index>(layout.count_offset())] = 1.0;
  if (layout.channels.histogram) {
    z[static_cast<Eigen::Index>(layout.histogram_offset() + quantizer->bucket(x))] = 1.0;
  }
  return z;
}

inline CollectionSketch sketch_collection(const SketchSpace& space, ModuleId type_id,
                                          std::span<const Eigen::VectorXd> items, ChannelSet channels,
                                          std::optional<Quantizer> quantizer = std::nullopt) {
  require(channels.histogram == quantizer.has_value(), ErrorKind::kInvalidInput,
          "a quantizer is required exactly when the histogram channel is selected");
  const std::size_t dx = space.output_dim(type_id);
  if (quantizer) {
    quantizer->validate();
    require(static_cast<std::size_t>(quantizer->direction.size()) == dx, ErrorKind::kInvalidInput,
            "quantizer direction dimension mismatch");
  }
  const ChannelLayout layout{dx, channels, quantizer ? quantizer->buckets() : 0};
  require(layout.augmented_dim() >= 1, ErrorKind::kInvalidInput, "no channels selected");
  Eigen::VectorXd z_sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.augmented_dim()));
  for (const auto& x : items) {
    require(static_cast<std::size_t>(x.size()) == dx, ErrorKind::kInvalidInput, "item dimension mismatch");
    z_sum += lift_item(layout, x, quantizer);
  }
  const auto r = space.derived(type_id, MatrixRole::kAug, space.dim(), layout.augmented_dim());
  return {Sketch(Eigen::VectorXd((*r) * z_sum)), type_id, channels, std::move(quantizer)};
}

/// Joint least-squares estimate of sum_j z_j over retained coordinates.
inline Eigen::VectorXd invert_collection(const SketchSpace& space, const CollectionSketch& cs) {
  const std::size_t dx = space.output_dim(cs.type_id);
  const ChannelLayout layout = cs.layout(dx);
  const auto r = space.derived(cs.type_id, MatrixRole::kAug, space.dim(), layout.augmented_dim());
  require(cs.sketch.dim() == space.dim(), ErrorKind::kInvalidInput, "collection sketch dimension mismatch");
  const auto rows = cs.sketch.retained_indices();
  require(rows.size() >= layout.augmented_dim(), ErrorKind::kUnderdetermined,
          "fewer retained coordinates than augmented dimension");
  if (!cs.sketch.has_mask()) return r->colPivHouseholderQr().solve(cs.sketch.values());
  const Eigen::MatrixXd a = (*r)(rows, Eigen::all);
  const Eigen::VectorXd y = cs.sketch.values()(rows);
  return a.colPivHouseholderQr().solve(y);
}

inline double estimate_count(const SketchSpace& space, const CollectionSketch& cs) {
  require(cs.channels.count, ErrorKind::kChannelAbsent, "count channel absent");
  const auto z = invert_collection(space, cs);
  return z[static_cast<Eigen::Index>(cs.layout(space.output_dim(cs.type_id)).count_offset())];
}

namespace detail {

struct Moments {
  double count = 0.0;
  Eigen::VectorXd mean;
  Eigen::VectorXd second;  // per-coordinate E[x^2], empty without moment2
};

inline Moments estimate_moments(const SketchSpace& space, const CollectionSketch& cs, bool need_second) {
  require(cs.channels.count && cs.channels.moment1, ErrorKind::kChannelAbsent, "moment1 and count channels required");
  require(!need_second || cs.channels.moment2, ErrorKind::kChannelAbsent, "moment2 channel required");
  const std::size_t dx = space.output_dim(cs.type_id);
  const ChannelLayout layout = cs.layout(dx);
  const auto z = invert_collection(space, cs);
  Moments m;
  m.count = z[static_cast<Eigen::Index>(layout.count_offset())];
  require(m.count >= 0.5, ErrorKind::kEmptyCollection, "estimated count below 0.5");
  const auto n = static_cast<Eigen::Index>(dx);
  m.mean = z.segment(static_cast<Eigen::Index>(layout.moment1_offset()), n) / m.count;
  if (need_second) m.second = z.segment(static_cast<Eigen::Index>(layout.moment2_offset()), n) / m.count;
  return m;
}

}  // namespace detail

inline Eigen::VectorXd estimate_mean(const SketchSpace& space, const CollectionSketch& cs) {
  return detail::estimate_moments(space, cs, false).mean;
}

/// Per-coordinate second moment minus squared mean, clamped at zero.
inline Eigen::VectorXd estimate_variance(const SketchSpace& space, const CollectionSketch& cs) {
  const auto m = detail::estimate_moments(space, cs, true);
  return (m.second.array() - m.mean.array().square()).cwiseMax(0.0).matrix();
}

inline std::vector<double> estimate_histogram(const SketchSpace& space, const CollectionSketch& cs) {
  require(cs.channels.histogram && cs.quantizer, ErrorKind::kChannelAbsent, "histogram channel absent");
  const std::size_t dx = space.output_dim(cs.type_id);
  const ChannelLayout layout = cs.layout(dx);
  const auto z = invert_collection(space, cs);
  std::vector<double> out(layout.buckets);
  for (std::size_t b = 0; b < layout.buckets; ++b) {
    out[b] = std::max(0.0, z[static_cast<Eigen::Index>(layout.histogram_offset() + b)]);
  }
  return out;
}

/// Multiset union of two collection sketches with the same layout.
inline CollectionSketch merge_collections(const CollectionSketch& a, const CollectionSketch& b) {
  require(a.type_id == b.type_id && a.channels == b.channels, ErrorKind::kInvalidInput,
          "collection layouts differ");
  require(a.quantizer.has_value() == b.quantizer.has_value() &&
              (!a.quantizer || (a.quantizer->edges == b.quantizer->edges &&
                                a.quantizer->direction == b.quantizer->direction)),
          ErrorKind::kInvalidInput, "collection quantizers differ");
  return {a.sketch + b.sketch, a.type_id, a.channels, a.quantizer};
}

}  // namespace sketchmem
