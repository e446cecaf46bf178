#pragma once

// Decoding sketches back into fired modules, attribute vectors, and trees.
//
// Everything here is mask-aware: linear algebra runs over the retained
// coordinates only, with E[R_r^T R_r] = (|retained| / d) I used to keep
// matched-filter scores and adjoint estimates unbiased under erasure.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "sketchmem/errors.hpp"
#include "sketchmem/random.hpp"
#include "sketchmem/registry.hpp"
#include "sketchmem/sketch.hpp"
#include "sketchmem/sketching.hpp"

namespace sketchmem {

struct ModuleScore {
  ModuleId module_id = 0;
  double score = 0.0;
};

struct DecodeParams {
  std::size_t k_max = 8;
  double epsilon = 1e-6;          // stop once residual_ratio <= epsilon
  double threshold = 0.0;         // stop once the best score falls below this
  double min_improvement = 0.0;   // reject a pick improving residual_ratio by less than this fraction
};

struct DecodedEntry {
  ModuleId module_id = 0;
  Eigen::VectorXd attribute;
  double score = 0.0;
};

struct DecodedLayer {
  std::vector<DecodedEntry> entries;  // descending score, ties by lower id
  Sketch residual;
  double residual_ratio = 0.0;

  [[nodiscard]] std::vector<ModuleId> support() const {
    std::vector<ModuleId> ids;
    for (const auto& e : entries) ids.push_back(e.module_id);
    std::sort(ids.begin(), ids.end());
    return ids;
  }
};

struct DecodedTree {
  ModuleId module_id = 0;
  Eigen::VectorXd attribute;
  double confidence = 0.0;
  std::vector<DecodedTree> children;
};

namespace detail {

struct Restriction {
  std::vector<Eigen::Index> rows;  // empty when the sketch is unmasked
  std::size_t retained = 0;
  std::size_t dim = 0;

  explicit Restriction(const Sketch& s) : retained(s.retained_count()), dim(s.dim()) {
    if (s.has_mask()) rows = s.retained_indices();
  }

  [[nodiscard]] bool masked() const noexcept { return retained != dim; }

  [[nodiscard]] Eigen::VectorXd apply(const Eigen::VectorXd& v) const {
    if (!masked()) return v;
    return v(rows);
  }

  [[nodiscard]] Eigen::MatrixXd apply(const Eigen::MatrixXd& m) const {
    if (!masked()) return m;
    return m(rows, Eigen::all);
  }

  /// Scatters restricted values back into a full-length vector.
  [[nodiscard]] Eigen::VectorXd expand(const Eigen::VectorXd& restricted) const {
    if (!masked()) return restricted;
    Eigen::VectorXd full = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    full(rows) = restricted;
    return full;
  }

  /// (d / |retained|)^2: makes the fired-module score concentrate near ||x||^2.
  [[nodiscard]] double score_scale() const noexcept {
    const double s = static_cast<double>(dim) / static_cast<double>(retained);
    return s * s;
  }
};

inline double restricted_score(const Restriction& restriction, const Eigen::MatrixXd& r, const Eigen::VectorXd& y_r) {
  if (!restriction.masked()) return (r.transpose() * y_r).squaredNorm() * restriction.score_scale();
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(r.cols());
  for (std::size_t i = 0; i < restriction.rows.size(); ++i) {
    acc += r.row(restriction.rows[i]).transpose() * y_r[static_cast<Eigen::Index>(i)];
  }
  return acc.squaredNorm() * restriction.score_scale();
}

inline bool score_before(const ModuleScore& a, const ModuleScore& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.module_id < b.module_id;
}

}  // namespace detail

/// Matched-filter score ||R_i^T y||^2 over retained coordinates, rescaled by
/// (d/|retained|)^2. A lone embedded x_i scores near ||x_i||^2; a module that
/// did not fire scores near ||y||^2 d_x / |retained|.
inline std::vector<ModuleScore> module_scores(const SketchSpace& space, const Sketch& sketch,
                                              std::span<const ModuleId> module_ids) {
  require(sketch.dim() == space.dim(), ErrorKind::kInvalidInput, "sketch dimension does not match config");
  const detail::Restriction restriction(sketch);
  require(restriction.retained > 0, ErrorKind::kUndefinedSimilarity, "sketch has no retained coordinates");
  const Eigen::VectorXd y_r = restriction.apply(sketch.values());
  std::vector<ModuleScore> out;
  out.reserve(module_ids.size());
  for (ModuleId id : module_ids) out.push_back({id, detail::restricted_score(restriction, *space.attr(id), y_r)});
  return out;
}

inline std::vector<ModuleScore> module_scores(const SketchSpace& space, const Sketch& sketch) {
  const auto ids = space.registry().ids();
  return module_scores(space, sketch, ids);
}

/// Modules scoring at least `threshold`, best first, at most k_max of them.
inline std::vector<ModuleId> detect_modules(const SketchSpace& space, const Sketch& sketch, double threshold,
                                            std::size_t k_max, std::span<const ModuleId> candidates) {
  require(threshold > 0.0, ErrorKind::kInvalidInput, "threshold must be positive");
  require(k_max >= 1, ErrorKind::kInvalidInput, "k_max must be >= 1");
  auto scores = module_scores(space, sketch, candidates);
  std::sort(scores.begin(), scores.end(), detail::score_before);
  std::vector<ModuleId> out;
  for (const auto& s : scores) {
    if (s.score < threshold || out.size() == k_max) break;
    out.push_back(s.module_id);
  }
  return out;
}

inline std::vector<ModuleId> detect_modules(const SketchSpace& space, const Sketch& sketch, double threshold,
                                            std::size_t k_max) {
  const auto ids = space.registry().ids();
  return detect_modules(space, sketch, threshold, k_max, ids);
}

/// Least-squares attribute estimate for one module over retained coordinates.
inline Eigen::VectorXd recover_attribute(const SketchSpace& space, const Sketch& sketch, ModuleId id) {
  require(sketch.dim() == space.dim(), ErrorKind::kInvalidInput, "sketch dimension does not match config");
  const auto r = space.attr(id);
  const detail::Restriction restriction(sketch);
  require(restriction.retained >= static_cast<std::size_t>(r->cols()), ErrorKind::kUnderdetermined,
          "fewer retained coordinates than module output dimension");
  const Eigen::MatrixXd a = restriction.apply(*r);
  return a.colPivHouseholderQr().solve(restriction.apply(sketch.values()));
}

/// Block orthogonal matching pursuit with joint least-squares re-fitting.
inline DecodedLayer block_omp_decode(const SketchSpace& space, const Sketch& sketch,
                                     std::span<const ModuleId> candidates, const DecodeParams& params) {
  require(params.epsilon >= 0.0, ErrorKind::kInvalidInput, "epsilon must be >= 0");
  require(params.k_max >= 1, ErrorKind::kInvalidInput, "k_max must be >= 1");
  require(sketch.dim() == space.dim(), ErrorKind::kInvalidInput, "sketch dimension does not match config");
  const detail::Restriction restriction(sketch);
  require(restriction.retained > 0, ErrorKind::kUndefinedSimilarity, "sketch has no retained coordinates");

  std::vector<MatrixPtr> blocks;
  blocks.reserve(candidates.size());
  Eigen::Index widest = 0;
  for (ModuleId id : candidates) {
    blocks.push_back(space.attr(id));
    widest = std::max(widest, blocks.back()->cols());
  }
  const std::size_t max_blocks = std::min(params.k_max, candidates.size());
  require(max_blocks * static_cast<std::size_t>(widest) <= restriction.retained, ErrorKind::kCapacity,
          "k_max * d_x exceeds the number of retained coordinates");

  const Eigen::VectorXd y_r = restriction.apply(sketch.values());
  const double y_norm = y_r.norm();
  DecodedLayer layer;
  layer.residual = sketch;
  layer.residual_ratio = 0.0;
  if (y_norm == 0.0 || candidates.empty()) {
    layer.residual_ratio = y_norm == 0.0 ? 0.0 : 1.0;
    return layer;
  }

  std::vector<std::size_t> chosen;  // indices into candidates
  std::vector<double> chosen_scores;
  std::vector<bool> taken(candidates.size(), false);
  Eigen::MatrixXd design(static_cast<Eigen::Index>(restriction.retained), 0);
  Eigen::VectorXd coeffs;
  Eigen::VectorXd residual = y_r;
  double ratio = 1.0;

  while (chosen.size() < max_blocks && ratio > params.epsilon) {
    std::optional<ModuleScore> best;
    std::size_t best_index = 0;
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (taken[c]) continue;
      const ModuleScore s{candidates[c], detail::restricted_score(restriction, *blocks[c], residual)};
      if (!best || detail::score_before(s, *best)) {
        best = s;
        best_index = c;
      }
    }
    if (!best || best->score < params.threshold) break;

    const Eigen::MatrixXd block = restriction.apply(*blocks[best_index]);
    Eigen::MatrixXd trial(design.rows(), design.cols() + block.cols());
    trial << design, block;
    Eigen::VectorXd trial_coeffs = trial.colPivHouseholderQr().solve(y_r);
    Eigen::VectorXd trial_residual = y_r - trial * trial_coeffs;
    const double trial_ratio = trial_residual.norm() / y_norm;
    if (params.min_improvement > 0.0 && trial_ratio > (1.0 - params.min_improvement) * ratio) break;

    taken[best_index] = true;
    chosen.push_back(best_index);
    chosen_scores.push_back(best->score);
    design = std::move(trial);
    coeffs = std::move(trial_coeffs);
    residual = std::move(trial_residual);
    ratio = trial_ratio;
  }

  Eigen::Index offset = 0;
  for (std::size_t i = 0; i < chosen.size(); ++i) {
    const Eigen::Index width = blocks[chosen[i]]->cols();
    layer.entries.push_back({candidates[chosen[i]], coeffs.segment(offset, width), chosen_scores[i]});
    offset += width;
  }
  std::sort(layer.entries.begin(), layer.entries.end(), [](const DecodedEntry& a, const DecodedEntry& b) {
    return detail::score_before({a.module_id, a.score}, {b.module_id, b.score});
  });
  layer.residual = sketch.with_values(restriction.expand(residual));
  layer.residual_ratio = std::clamp(ratio, 0.0, 1.0);
  return layer;
}

inline DecodedLayer block_omp_decode(const SketchSpace& space, const Sketch& sketch, const DecodeParams& params) {
  const auto ids = space.registry().ids();
  return block_omp_decode(space, sketch, ids, params);
}

namespace detail {

inline std::vector<DecodedTree> decode_level(const SketchSpace& space, const Sketch& sketch,
                                             std::span<const ModuleId> candidates, std::size_t depth_left,
                                             const DecodeParams& params) {
  const DecodedLayer layer = block_omp_decode(space, sketch, candidates, params);
  const double confidence = std::clamp(1.0 - layer.residual_ratio, 0.0, 1.0);
  const double level_scale = std::sqrt(static_cast<double>(layer.entries.size()));
  const Restriction restriction(layer.residual);
  const double erasure_scale = static_cast<double>(restriction.dim) / static_cast<double>(restriction.retained);

  std::vector<DecodedTree> out;
  for (const auto& entry : layer.entries) {
    DecodedTree node{entry.module_id, {}, confidence, {}};
    if (depth_left > 1 && layer.residual_ratio > 0.0) {
      // Adjoint estimate of this module's combined child sketch; the
      // recursion matrix is square Gaussian, so R^T is the stable inverse.
      const auto rec = space.rec(entry.module_id);
      Eigen::VectorXd child = rec->transpose() * layer.residual.values();
      child *= erasure_scale * level_scale / space.config().rec_weight;
      node.children = decode_level(space, Sketch(std::move(child)), candidates, depth_left - 1, params);
    }
    const double weight = node.children.empty() ? 1.0 : space.config().attr_weight;
    node.attribute = entry.attribute * (level_scale / weight);
    out.push_back(std::move(node));
  }
  return out;
}

}  // namespace detail

/// Recursive decode down to depth_limit levels. Each level is a block-OMP
/// pass; children of a detected module are decoded from the adjoint of its
/// recursion matrix applied to the level residual.
inline std::vector<DecodedTree> decode_tree(const SketchSpace& space, const Sketch& sketch, std::size_t depth_limit,
                                            const DecodeParams& params, std::span<const ModuleId> candidates) {
  require(depth_limit >= 1, ErrorKind::kInvalidInput, "depth_limit must be >= 1");
  return detail::decode_level(space, sketch, candidates, depth_limit, params);
}

inline std::vector<DecodedTree> decode_tree(const SketchSpace& space, const Sketch& sketch, std::size_t depth_limit,
                                            const DecodeParams& params) {
  const auto ids = space.registry().ids();
  return decode_tree(space, sketch, depth_limit, params, ids);
}

struct ThresholdCalibration {
  double threshold = 0.0;
  double nonfired_p99 = 0.0;
  double fired_p01 = 0.0;
  bool inseparable = false;  // distributions overlap; threshold is the equal-error crossing point
};

struct CalibrationOptions {
  std::size_t trials = 200;
  std::size_t k_fired = 1;
  std::uint64_t seed = 0;
};

namespace detail {

inline double percentile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  const auto rank = static_cast<std::size_t>(std::floor(p * static_cast<double>(values.size() - 1)));
  return values[rank];
}

}  // namespace detail

/// Midpoint between the 99th percentile of non-fired scores and the 1st
/// percentile of fired scores, for unit-norm attributes.
inline ThresholdCalibration calibrate_threshold(const SketchSpace& space, const CalibrationOptions& options) {
  require(options.trials >= 100, ErrorKind::kInvalidInput, "calibration needs at least 100 trials");
  const auto ids = space.registry().ids();
  require(ids.size() > options.k_fired && options.k_fired >= 1, ErrorKind::kInvalidInput,
          "registry too small for calibration");
  std::vector<double> fired, nonfired;
  for (std::size_t t = 0; t < options.trials; ++t) {
    Stream rng = Stream::derive(options.seed, "calibrate", t);
    std::vector<ModuleId> pool = ids;
    std::vector<ModuleOutput> outputs;
    for (std::size_t j = 0; j < options.k_fired; ++j) {
      const std::size_t pick = j + static_cast<std::size_t>(rng.below(pool.size() - j));
      std::swap(pool[j], pool[pick]);
      Eigen::VectorXd x(static_cast<Eigen::Index>(space.output_dim(pool[j])));
      for (auto& v : x) v = rng.normal();
      outputs.emplace_back(pool[j], x.normalized());
    }
    const Sketch y = sketch_layer(space, outputs);
    for (const auto& s : module_scores(space, y, ids)) {
      const bool is_fired = std::any_of(outputs.begin(), outputs.end(),
                                        [&](const ModuleOutput& o) { return o.first == s.module_id; });
      (is_fired ? fired : nonfired).push_back(s.score);
    }
  }
  ThresholdCalibration cal;
  cal.nonfired_p99 = detail::percentile(nonfired, 0.99);
  cal.fired_p01 = detail::percentile(fired, 0.01);
  if (cal.fired_p01 > cal.nonfired_p99) {
    cal.threshold = 0.5 * (cal.fired_p01 + cal.nonfired_p99);
    return cal;
  }
  cal.inseparable = true;
  // Equal-error crossing: the smallest candidate where the fired miss rate
  // reaches the non-fired false-alarm rate.
  std::sort(fired.begin(), fired.end());
  std::sort(nonfired.begin(), nonfired.end());
  std::vector<double> grid = fired;
  grid.insert(grid.end(), nonfired.begin(), nonfired.end());
  std::sort(grid.begin(), grid.end());
  cal.threshold = grid.back();
  for (double theta : grid) {
    const double miss = static_cast<double>(std::lower_bound(fired.begin(), fired.end(), theta) - fired.begin()) /
                        static_cast<double>(fired.size());
    const double false_alarm =
        static_cast<double>(nonfired.end() - std::lower_bound(nonfired.begin(), nonfired.end(), theta)) /
        static_cast<double>(nonfired.size());
    if (miss >= false_alarm) {
      cal.threshold = theta;
      break;
    }
  }
  return cal;
}

}  // namespace sketchmem
