#pragma once

// Monte Carlo experiments behind `sketchmem eval`. Each one pins its own
// network and sketch parameters, draws every trial from a named sub-stream of
// the run seed, and compares against ground truth or an exact oracle.

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "sketchmem/aggregate.hpp"
#include "sketchmem/concepts.hpp"
#include "sketchmem/config.hpp"
#include "sketchmem/dictionary.hpp"
#include "sketchmem/memory_index.hpp"
#include "sketchmem/parallel.hpp"
#include "sketchmem/recovery.hpp"
#include "sketchmem/serialization.hpp"
#include "sketchmem/simnet.hpp"
#include "sketchmem/sketching.hpp"

namespace sketchmem {

struct MetricPoint {
  std::string series;
  double axis = 0.0;
  std::vector<double> samples;

  [[nodiscard]] std::size_t trials() const noexcept { return samples.size(); }

  [[nodiscard]] double mean() const {
    return samples.empty() ? 0.0 : std::accumulate(samples.begin(), samples.end(), 0.0) / static_cast<double>(samples.size());
  }

  [[nodiscard]] double stddev() const {
    if (samples.size() < 2) return 0.0;
    const double m = mean();
    double ss = 0.0;
    for (double s : samples) ss += (s - m) * (s - m);
    return std::sqrt(ss / static_cast<double>(samples.size() - 1));
  }

  [[nodiscard]] double median() const {
    if (samples.empty()) return 0.0;
    auto s = samples;
    std::sort(s.begin(), s.end());
    const std::size_t n = s.size();
    return n % 2 == 1 ? s[n / 2] : 0.5 * (s[n / 2 - 1] + s[n / 2]);
  }
};

struct GateCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

class MetricsReport {
 public:
  MetricsReport(std::string experiment, std::string axis_name)
      : experiment_(std::move(experiment)), axis_name_(std::move(axis_name)) {}

  /// Points are append-only; the first series added is the primary one.
  const MetricPoint& add(std::string series, double axis, std::vector<double> samples) {
    require(!samples.empty(), ErrorKind::kInvalidInput, "a metric point needs at least one trial");
    points_.push_back({std::move(series), axis, std::move(samples)});
    return points_.back();
  }

  void check(std::string name, bool passed, std::string detail) {
    checks_.push_back({std::move(name), passed, std::move(detail)});
  }

  void set_config(Json config) { config_ = std::move(config); }
  void set_extra(const std::string& key, Json value) { extra_[key] = std::move(value); }
  void set_wall_clock(double seconds) { wall_clock_s_ = seconds; }

  [[nodiscard]] const std::string& experiment() const noexcept { return experiment_; }
  [[nodiscard]] const std::vector<MetricPoint>& points() const noexcept { return points_; }
  [[nodiscard]] const std::vector<GateCheck>& checks() const noexcept { return checks_; }
  [[nodiscard]] const Json& extra() const noexcept { return extra_; }
  [[nodiscard]] double wall_clock() const noexcept { return wall_clock_s_; }

  [[nodiscard]] bool gate() const {
    return std::all_of(checks_.begin(), checks_.end(), [](const GateCheck& c) { return c.passed; });
  }

  [[nodiscard]] const MetricPoint& point(const std::string& series, double axis) const {
    for (const auto& p : points_) {
      if (p.series == series && p.axis == axis) return p;
    }
    fail(ErrorKind::kNotFound, "no point " + series + "@" + std::to_string(axis));
  }

  [[nodiscard]] std::vector<std::string> series() const {
    std::vector<std::string> out;
    for (const auto& p : points_) {
      if (std::find(out.begin(), out.end(), p.series) == out.end()) out.push_back(p.series);
    }
    return out;
  }

  /// Wall-clock time is the only non-deterministic field.
  [[nodiscard]] Json to_json() const {
    Json points = Json::array();
    for (const auto& p : points_) {
      points.push_back({{"series", p.series},
                        {"axis", p.axis},
                        {"mean", p.mean()},
                        {"stddev", p.stddev()},
                        {"trials", p.trials()}});
    }
    Json checks = Json::array();
    for (const auto& c : checks_) checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
    return {{"experiment", experiment_}, {"axis", axis_name_},   {"points", std::move(points)},
            {"gate", gate()},            {"checks", std::move(checks)}, {"extra", extra_},
            {"config", config_},         {"wall_clock_s", wall_clock_s_}};
  }

  /// One CSV (axis,mean,stddev,trials) per series.
  [[nodiscard]] std::map<std::string, std::string> to_csv() const {
    std::map<std::string, std::string> out;
    for (const auto& p : points_) {
      auto& text = out[p.series];
      if (text.empty()) text = "axis,mean,stddev,trials\n";
      text += fmt_number(p.axis) + "," + fmt_number(p.mean()) + "," + fmt_number(p.stddev()) + "," +
              std::to_string(p.trials()) + "\n";
    }
    return out;
  }

 private:
  static std::string fmt_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
  }

  std::string experiment_;
  std::string axis_name_;
  std::vector<MetricPoint> points_;
  std::vector<GateCheck> checks_;
  Json config_ = Json::object();
  Json extra_ = Json::object();
  double wall_clock_s_ = 0.0;
};

struct ExperimentOptions {
  std::uint64_t seed = 0;
  std::size_t trials = 0;  // 0 = the experiment's own default
  std::size_t threads = thread_budget();

  [[nodiscard]] std::size_t trials_or(std::size_t fallback) const { return trials == 0 ? fallback : trials; }
};

namespace experiments {

namespace detail {

inline SketchSpace make_space(std::size_t dim, std::size_t modules, std::size_t output_dim, std::uint64_t seed,
                              std::shared_ptr<MatrixCache> cache = std::make_shared<MatrixCache>()) {
  simnet::NetworkParams net;
  net.modules = modules;
  net.output_dim = output_dim;
  net.k_fired_max = 1;
  net.fan_in_max = 0;
  net.fan_in_min = 0;
  net.seed = seed;
  SketchConfig config;
  config.sketch_dim = dim;
  config.global_seed = seed;
  return SketchSpace(config, simnet::gen_network(net), std::move(cache));
}

/// k distinct modules from `ids`, each with a unit Gaussian attribute.
inline std::vector<ModuleOutput> random_layer(Stream& rng, std::vector<ModuleId> ids, std::size_t k,
                                              std::size_t output_dim) {
  std::vector<ModuleOutput> out;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t pick = j + static_cast<std::size_t>(rng.below(ids.size() - j));
    std::swap(ids[j], ids[pick]);
    out.emplace_back(ids[j], simnet::random_unit(rng, output_dim));
  }
  return out;
}

inline std::vector<ModuleId> sorted_ids(const std::vector<ModuleOutput>& layer) {
  std::vector<ModuleId> ids;
  for (const auto& [id, x] : layer) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline std::vector<ModuleId> sorted(std::vector<ModuleId> ids) {
  std::sort(ids.begin(), ids.end());
  return ids;
}

inline double fraction(const std::vector<double>& flags) {
  return flags.empty() ? 0.0 : std::accumulate(flags.begin(), flags.end(), 0.0) / static_cast<double>(flags.size());
}

inline std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.4g", v);
  return buf;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// Exact fired-set recovery vs sketch dimension at N = 256, d_x = 8, k = 4.
/// Primary series thresholds matched-filter scores at a calibrated level;
/// the block-omp series decodes the same sketches.
inline MetricsReport dim_sweep(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kModules = 256, kOutput = 8, kFired = 4;
  const std::size_t trials = opt.trials_or(100);
  MetricsReport report("dim-sweep", "sketch_dim");
  Json thresholds = Json::object();
  for (std::size_t dim : {32u, 64u, 128u, 256u, 512u, 1024u}) {
    const SketchSpace space = detail::make_space(dim, kModules, kOutput, opt.seed);
    const auto cal = calibrate_threshold(space, {200, kFired, mix_key(opt.seed, fnv1a("dim-sweep/calibrate"), dim)});
    thresholds[std::to_string(dim)] = {{"threshold", cal.threshold}, {"inseparable", cal.inseparable}};
    const auto ids = space.registry().ids();
    std::vector<double> detect(trials), omp(trials);
    parallel_for(
        trials,
        [&](std::size_t t) {
          Stream rng = Stream::derive(opt.seed, "dim-sweep/trial", t);
          const auto layer = detail::random_layer(rng, ids, kFired, kOutput);
          const Sketch y = sketch_layer(space, layer);
          const auto truth = detail::sorted_ids(layer);
          detect[t] = detail::sorted(detect_modules(space, y, cal.threshold, 2 * kFired)) == truth ? 1.0 : 0.0;
          const std::size_t k_max = std::min(2 * kFired, dim / kOutput);
          omp[t] = block_omp_decode(space, y, DecodeParams{k_max, 1e-6, 0.0, 0.0}).support() == truth ? 1.0 : 0.0;
        },
        opt.threads);
    report.add("detect", static_cast<double>(dim), detect);
    report.add("block-omp", static_cast<double>(dim), omp);
  }
  report.set_extra("thresholds", thresholds);
  const double hi = report.point("detect", 1024).mean();
  const double lo = report.point("detect", 64).mean();
  report.check("exact recovery at d=1024 >= 0.95", hi >= 0.95, detail::fmt(hi));
  report.check("exact recovery at d=64 <= 0.5", lo <= 0.5, detail::fmt(lo));
  const double elapsed = detail::seconds_since(t0);
  report.check("runtime <= 120 s", elapsed <= 120.0, "");
  report.set_wall_clock(elapsed);
  return report;
}

/// Block-OMP exact support rate vs number of fired modules at d = 1024.
inline MetricsReport sparsity_sweep(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kModules = 256, kOutput = 8, kDim = 1024;
  const std::size_t trials = opt.trials_or(50);
  MetricsReport report("sparsity-sweep", "k");
  const SketchSpace space = detail::make_space(kDim, kModules, kOutput, opt.seed);
  const auto ids = space.registry().ids();
  for (std::size_t k : {1u, 2u, 4u, 8u, 12u, 16u, 24u}) {
    std::vector<double> exact(trials);
    parallel_for(
        trials,
        [&](std::size_t t) {
          Stream rng = Stream::derive(opt.seed, "sparsity-sweep/trial", mix_key(k, t));
          const auto layer = detail::random_layer(rng, ids, k, kOutput);
          const Sketch y = sketch_layer(space, layer);
          exact[t] = block_omp_decode(space, y, DecodeParams{2 * k, 1e-6, 0.0, 0.0}).support() ==
                             detail::sorted_ids(layer)
                         ? 1.0
                         : 0.0;
        },
        opt.threads);
    report.add("block-omp", static_cast<double>(k), exact);
  }
  report.set_wall_clock(detail::seconds_since(t0));
  return report;
}

/// Attribute recovery: a lone module by direct least squares, and k = 4
/// modules jointly via block OMP. The single-block series applies the
/// one-module estimator to k = 4 sketches, where the other modules act as
/// interference.
inline MetricsReport attr_recovery(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kModules = 64, kOutput = 8, kDim = 1024, kFired = 4;
  const std::size_t trials = opt.trials_or(100);
  MetricsReport report("attr-recovery", "k");
  const SketchSpace space = detail::make_space(kDim, kModules, kOutput, opt.seed);
  const auto ids = space.registry().ids();
  std::vector<double> single(trials);
  std::vector<std::vector<double>> joint(trials), one_block(trials);
  parallel_for(
      trials,
      [&](std::size_t t) {
        Stream rng = Stream::derive(opt.seed, "attr-recovery/trial", t);
        const auto lone = detail::random_layer(rng, ids, 1, kOutput);
        const auto x_hat = recover_attribute(space, sketch_layer(space, lone), lone[0].first);
        single[t] = (x_hat - lone[0].second).norm() / lone[0].second.norm();

        const auto layer = detail::random_layer(rng, ids, kFired, kOutput);
        const Sketch y = sketch_layer(space, layer);
        const auto decoded = block_omp_decode(space, y, DecodeParams{2 * kFired, 1e-6, 0.0, 0.0});
        for (const auto& [id, x] : layer) {
          double err = 1.0;
          for (const auto& e : decoded.entries) {
            if (e.module_id == id) err = (e.attribute - x).norm() / x.norm();
          }
          joint[t].push_back(err);
          one_block[t].push_back((recover_attribute(space, y, id) - x).norm() / x.norm());
        }
      },
      opt.threads);
  auto flatten = [](const std::vector<std::vector<double>>& v) {
    std::vector<double> out;
    for (const auto& row : v) out.insert(out.end(), row.begin(), row.end());
    return out;
  };
  report.add("single", 1, single);
  const auto& p_joint = report.add("joint", kFired, flatten(joint));
  const auto& p_block = report.add("single-block", kFired, flatten(one_block));
  const double worst = *std::max_element(single.begin(), single.end());
  report.check("single-module relative error <= 1e-6", worst <= 1e-6, "max " + detail::fmt(worst));
  report.check("k=4 joint median relative error <= 0.1", p_joint.median() <= 0.1,
               "median " + detail::fmt(p_joint.median()));
  report.set_extra("single_block_median", p_block.median());
  report.set_extra("single_block_analytic", std::sqrt(static_cast<double>(kOutput * (kFired - 1)) / kDim));
  report.set_wall_clock(detail::seconds_since(t0));
  return report;
}

/// Depth-2 events (2 roots x 2 children) decoded recursively at d = 4096.
inline MetricsReport tree_decode(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  const std::size_t trials = opt.trials_or(100);
  simnet::NetworkParams net{64, 8, 2, 2, 2, 2, 2, {}, false, opt.seed};
  SketchConfig config;
  config.sketch_dim = 4096;
  config.global_seed = opt.seed;
  const SketchSpace space(config, simnet::gen_network(net));
  const DecodeParams params{8, 1e-6, 0.05, 0.05};
  MetricsReport report("tree-decode", "sketch_dim");
  std::vector<double> pass(trials), root_exact(trials), child_frac(trials);
  parallel_for(
      trials,
      [&](std::size_t t) {
        const auto record = simnet::gen_event(space.registry(), net, mix_key(fnv1a("tree-decode"), t));
        const auto trees = decode_tree(space, sketch_event(space, record), 2, params);
        std::vector<ModuleId> truth_roots, got_roots;
        for (NodeId r : record.roots) truth_roots.push_back(record.node(r).module_id);
        for (const auto& tr : trees) got_roots.push_back(tr.module_id);
        root_exact[t] = detail::sorted(truth_roots) == detail::sorted(got_roots) ? 1.0 : 0.0;
        std::size_t total = 0, found = 0;
        for (NodeId r : record.roots) {
          const auto& root = record.node(r);
          const auto it = std::find_if(trees.begin(), trees.end(),
                                       [&](const DecodedTree& d) { return d.module_id == root.module_id; });
          for (NodeId c : root.children) {
            ++total;
            if (it == trees.end()) continue;
            const ModuleId cm = record.node(c).module_id;
            if (std::any_of(it->children.begin(), it->children.end(),
                            [&](const DecodedTree& d) { return d.module_id == cm; })) {
              ++found;
            }
          }
        }
        child_frac[t] = total == 0 ? 1.0 : static_cast<double>(found) / static_cast<double>(total);
        pass[t] = root_exact[t] == 1.0 && child_frac[t] >= 0.75 ? 1.0 : 0.0;
      },
      opt.threads);
  report.add("pass", 4096, pass);
  report.add("root-exact", 4096, root_exact);
  report.add("child-fraction", 4096, child_frac);
  const double passed = std::accumulate(pass.begin(), pass.end(), 0.0);
  const double needed = 0.9 * static_cast<double>(trials);
  report.check("root exact and >= 75% children in >= 90% of trials", passed >= needed,
               detail::fmt(passed) + "/" + std::to_string(trials));
  const double elapsed = detail::seconds_since(t0);
  report.check("runtime <= 300 s", elapsed <= 300.0, "");
  report.set_wall_clock(elapsed);
  return report;
}

/// Detection accuracy (exact support via block OMP) vs erased fraction, with
/// each trial's masks nested across fractions.
inline MetricsReport erasure_sweep(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kModules = 64, kOutput = 8, kDim = 1024, kFired = 2;
  const std::size_t trials = opt.trials_or(100);
  const std::vector<double> fractions{0.0, 0.25, 0.5, 0.75};
  const SketchSpace space = detail::make_space(kDim, kModules, kOutput, opt.seed);
  const auto ids = space.registry().ids();
  const DecodeParams params{2 * kFired, 1e-6, 0.0, 0.0};
  std::vector<std::vector<double>> acc(fractions.size(), std::vector<double>(trials));
  std::vector<double> baseline_match(trials);
  parallel_for(
      trials,
      [&](std::size_t t) {
        Stream rng = Stream::derive(opt.seed, "erasure-sweep/trial", t);
        const auto layer = detail::random_layer(rng, ids, kFired, kOutput);
        const Sketch y = sketch_layer(space, layer);
        const auto truth = detail::sorted_ids(layer);
        const std::uint64_t erase_seed = mix_key(opt.seed, fnv1a("erasure-sweep/mask"), t);
        for (std::size_t f = 0; f < fractions.size(); ++f) {
          const Sketch erased = erase(y, fractions[f], erase_seed);
          const auto decoded = block_omp_decode(space, erased, params);
          acc[f][t] = decoded.support() == truth ? 1.0 : 0.0;
          if (fractions[f] == 0.0) {
            const auto base = block_omp_decode(space, y, params);
            baseline_match[t] = erased == y && base.support() == decoded.support() &&
                                        base.residual_ratio == decoded.residual_ratio
                                    ? 1.0
                                    : 0.0;
          }
        }
      },
      opt.threads);
  MetricsReport report("erasure-sweep", "erased_fraction");
  for (std::size_t f = 0; f < fractions.size(); ++f) report.add("accuracy", fractions[f], acc[f]);
  const double at_half = report.point("accuracy", 0.5).mean();
  bool monotone = true;
  for (std::size_t f = 1; f < fractions.size(); ++f) {
    monotone = monotone && detail::fraction(acc[f]) <= detail::fraction(acc[f - 1]);
  }
  report.check("accuracy at f=0.5 >= 0.9", at_half >= 0.9, detail::fmt(at_half));
  report.check("accuracy non-increasing in f", monotone, "");
  const double same = detail::fraction(baseline_match);
  report.check("f=0 identical to un-erased baseline", same == 1.0, detail::fmt(same));
  report.set_wall_clock(detail::seconds_since(t0));
  return report;
}

/// Count, mean, variance, and histogram of a 100-item collection at
/// d = 2048, sketched together with four unrelated fired modules, compared
/// with the exact statistics of the items.
inline MetricsReport stats_error(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kModules = 64, kOutput = 8, kItems = 100, kBuckets = 8, kBackground = 4;
  const std::size_t trials = opt.trials_or(100);
  MetricsReport report("stats-error", "sketch_dim");
  const ChannelSet channels{true, true, true, true};

  struct Outcome {
    double count_err = 0.0, mean_err = 0.0, var_err = 0.0, hist_l1 = 0.0;
  };
  auto run = [&](std::size_t dim, std::size_t n_trials) {
    const SketchSpace space = detail::make_space(dim, kModules, kOutput, opt.seed);
    const ModuleId type_id = 0;
    std::vector<ModuleId> others;
    for (ModuleId id : space.registry().ids()) {
      if (id != type_id) others.push_back(id);
    }
    std::vector<Outcome> out(n_trials);
    parallel_for(
        n_trials,
        [&](std::size_t t) {
          Stream rng = Stream::derive(opt.seed, "stats-error/trial", t);
          Eigen::VectorXd mu(kOutput);
          for (auto& v : mu) v = 0.5 * rng.normal();
          std::vector<Eigen::VectorXd> items(kItems);
          for (auto& x : items) {
            x.resize(kOutput);
            for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = mu[i] + rng.normal();
          }
          const Eigen::VectorXd dir = simnet::random_unit(rng, kOutput);
          auto quantizer = Quantizer::uniform(dir, -2.0, 2.0, kBuckets);

          auto cs = sketch_collection(space, type_id, items, channels, quantizer);
          const auto background = detail::random_layer(rng, others, kBackground, kOutput);
          cs.sketch = cs.sketch + sketch_layer(space, background);

          // Exact statistics, computed directly from the items.
          Eigen::VectorXd mean = Eigen::VectorXd::Zero(kOutput), sq = Eigen::VectorXd::Zero(kOutput);
          std::vector<double> hist(kBuckets, 0.0);
          const double width = 4.0 / static_cast<double>(kBuckets);
          for (const auto& x : items) {
            mean += x;
            sq += x.array().square().matrix();
            const double p = dir.dot(x);
            std::size_t b = 0;
            for (std::size_t e = 1; e < kBuckets; ++e) {
              if (p >= -2.0 + width * static_cast<double>(e)) b = e;
            }
            hist[b] += 1.0;
          }
          mean /= static_cast<double>(kItems);
          const Eigen::VectorXd var = (sq / static_cast<double>(kItems)).array() - mean.array().square();

          Outcome o;
          o.count_err = std::abs(estimate_count(space, cs) - static_cast<double>(kItems)) / static_cast<double>(kItems);
          o.mean_err = (estimate_mean(space, cs) - mean).norm();
          o.var_err = (estimate_variance(space, cs) - var).norm();
          const auto h = estimate_histogram(space, cs);
          for (std::size_t b = 0; b < kBuckets; ++b) o.hist_l1 += std::abs(h[b] - hist[b]);
          out[t] = o;
        },
        opt.threads);
    return out;
  };

  const auto main = run(2048, trials);
  std::vector<double> count_ok, count_err, mean_err, var_err, hist_l1;
  for (const auto& o : main) {
    count_ok.push_back(o.count_err <= 0.05 ? 1.0 : 0.0);
    count_err.push_back(o.count_err);
    mean_err.push_back(o.mean_err);
    var_err.push_back(o.var_err);
    hist_l1.push_back(o.hist_l1);
  }
  report.add("count-relative-error", 2048, count_err);
  report.add("count-within-5pct", 2048, count_ok);
  report.add("mean-l2-error", 2048, mean_err);
  report.add("variance-l2-error", 2048, var_err);
  report.add("histogram-l1-error", 2048, hist_l1);

  // Interference from the background shrinks as the dimension grows.
  for (std::size_t dim : {256u, 512u, 1024u, 4096u}) {
    std::vector<double> errs;
    for (const auto& o : run(dim, std::min<std::size_t>(trials, 50))) errs.push_back(o.count_err);
    report.add("count-error-scaling", static_cast<double>(dim), errs);
  }

  const double ok = std::accumulate(count_ok.begin(), count_ok.end(), 0.0);
  const double worst_mean = *std::max_element(mean_err.begin(), mean_err.end());
  const double worst_hist = *std::max_element(hist_l1.begin(), hist_l1.end());
  report.check("count within 5% in >= 90% of trials", ok >= 0.9 * static_cast<double>(trials),
               detail::fmt(ok) + "/" + std::to_string(trials));
  report.check("mean l2 error <= 0.1 in every trial", worst_mean <= 0.1, "max " + detail::fmt(worst_mean));
  report.check("histogram l1 error <= 0.15 n in every trial", worst_hist <= 0.15 * kItems,
               "max " + detail::fmt(worst_hist));
  report.set_wall_clock(detail::seconds_since(t0));
  return report;
}

/// Event-sketch cosine vs the fraction of shared (module, attribute) roots
/// between two depth-1 events of 8 roots each.
inline MetricsReport similarity(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kModules = 64, kOutput = 8, kDim = 2048, kRoots = 8;
  const std::size_t trials = opt.trials_or(200);
  const SketchSpace space = detail::make_space(kDim, kModules, kOutput, opt.seed);
  const auto ids = space.registry().ids();
  const std::vector<double> shares{0.0, 0.25, 0.5, 0.75, 1.0};
  MetricsReport report("similarity", "shared_fraction");
  auto as_record = [](const std::vector<ModuleOutput>& layer) {
    ComputationRecord r;
    for (const auto& [id, x] : layer) {
      r.roots.push_back(r.nodes.size());
      r.nodes.push_back({r.nodes.size(), id, x, {}});
    }
    return r;
  };
  for (double share : shares) {
    const auto shared = static_cast<std::size_t>(std::lround(share * kRoots));
    std::vector<double> cos(trials);
    parallel_for(
        trials,
        [&](std::size_t t) {
          Stream rng = Stream::derive(opt.seed, "similarity/trial", mix_key(shared, t));
          // 2k distinct modules: the first k form event A; event B keeps
          // `shared` of them and takes fresh ones from the second half.
          const auto pool = detail::random_layer(rng, ids, 2 * kRoots, kOutput);
          std::vector<ModuleOutput> a(pool.begin(), pool.begin() + kRoots);
          std::vector<ModuleOutput> b(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(shared));
          b.insert(b.end(), pool.begin() + kRoots, pool.begin() + static_cast<std::ptrdiff_t>(2 * kRoots - shared));
          cos[t] = cosine(sketch_event(space, as_record(a)), sketch_event(space, as_record(b)));
        },
        opt.threads);
    report.add("cosine", share, cos);
  }
  bool increasing = true, close = true;
  std::string detail_text;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double m = report.point("cosine", shares[i]).mean();
    if (i > 0) increasing = increasing && m > report.point("cosine", shares[i - 1]).mean();
    close = close && std::abs(m - shares[i]) <= 0.15;
    detail_text += (i ? " " : "") + detail::fmt(m);
  }
  report.check("mean cosine strictly increasing in shared fraction", increasing, detail_text);
  report.check("mean cosine within 0.15 of shared fraction", close, detail_text);
  report.set_wall_clock(detail::seconds_since(t0));
  return report;
}

/// Re-observation of a stored event: every attribute perturbed by relative
/// Gaussian noise `noise`, then renormalized.
inline ComputationRecord reobserve(ComputationRecord record, double noise, Stream& rng) {
  for (auto& n : record.nodes) {
    const double per_coord = noise / std::sqrt(static_cast<double>(n.output.size()));
    for (auto& v : n.output) v += per_coord * rng.normal();
    n.output.normalize();
  }
  return record;
}

/// LSH top-1 recall against exact_scan over 1000 stored events, plus entity
/// retrieval by component in streams where one entity recurs 5 times.
inline MetricsReport lsh_recall(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  MetricsReport report("lsh-recall", "tables");
  constexpr std::size_t kEvents = 1000, kQueries = 200;
  {
    simnet::NetworkParams net{64, 8, 1, 0, 0, 4, 4, {}, false, opt.seed};
    SketchConfig config;
    config.sketch_dim = 1024;
    config.global_seed = opt.seed;
    const SketchSpace space(config, simnet::gen_network(net));
    const LshParams lsh{16, 12, opt.seed};
    MemoryIndex index(config.sketch_dim, lsh);
    std::vector<ComputationRecord> records(kEvents);
    std::vector<Sketch> sketches(kEvents);
    parallel_for(
        kEvents,
        [&](std::size_t e) {
          records[e] = simnet::gen_event(space.registry(), net, mix_key(fnv1a("lsh-recall/event"), e));
          sketches[e] = sketch_event(space, records[e]);
        },
        opt.threads);
    for (std::size_t e = 0; e < kEvents; ++e) index.insert({e, sketches[e], static_cast<std::int64_t>(e), "{}"});

    const std::size_t queries = opt.trials_or(kQueries);
    std::vector<double> agree(queries), original(queries), probed(queries);
    parallel_for(
        queries,
        [&](std::size_t q) {
          Stream rng = Stream::derive(opt.seed, "lsh-recall/query", q);
          const auto target = static_cast<std::size_t>(rng.below(kEvents));
          const Sketch probe = sketch_event(space, reobserve(records[target], 0.25, rng));
          QueryStats stats;
          const auto hits = index.query(probe, 1, &stats);
          const auto truth = index.exact_scan(probe, 1);
          agree[q] = !hits.empty() && hits[0].record_id == truth[0].record_id ? 1.0 : 0.0;
          original[q] = !hits.empty() && hits[0].record_id == target ? 1.0 : 0.0;
          probed[q] = static_cast<double>(stats.candidates) / static_cast<double>(kEvents);
        },
        opt.threads);
    report.add("top1-recall", lsh.tables, agree);
    report.add("top1-is-original", lsh.tables, original);
    report.add("candidate-fraction", lsh.tables, probed);
    const double recall = detail::fraction(agree);
    report.check("top-1 recall vs exact_scan >= 0.9", recall >= 0.9, detail::fmt(recall));
  }
  {
    // Entity retrieval: a lone component against whole events has cosine
    // near 1/sqrt(k), so this index uses short signatures and more tables.
    constexpr std::size_t kStreamEvents = 200, kOccurrences = 5, kTop = 10;
    const std::size_t streams = opt.trials_or(100);
    const LshParams lsh{32, 4, opt.seed};
    std::vector<double> all_found(streams);
    parallel_for(
        streams,
        [&](std::size_t s) {
          simnet::NetworkParams net{64, 8, 1, 0, 0, 1, 3, {}, false, mix_key(opt.seed, fnv1a("lsh-recall/stream"), s)};
          SketchConfig config;
          config.sketch_dim = 1024;
          config.global_seed = opt.seed;
          const SketchSpace space(config, simnet::gen_network(net));
          const auto roster = simnet::make_roster(space.registry(), net, 1, s);
          Stream rng = Stream::derive(opt.seed, "lsh-recall/occurrences", s);
          std::vector<std::size_t> order(kStreamEvents);
          std::iota(order.begin(), order.end(), std::size_t{0});
          for (std::size_t i = 0; i < kOccurrences; ++i) {
            std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(kStreamEvents - i))]);
          }
          const std::set<std::size_t> with_entity(order.begin(), order.begin() + kOccurrences);
          MemoryIndex index(config.sketch_dim, lsh);
          for (std::size_t e = 0; e < kStreamEvents; ++e) {
            auto record = simnet::gen_event(space.registry(), net, e);
            if (with_entity.contains(e)) simnet::inject_entity(record, roster[0], net.k_fired_max);
            index.insert({e, sketch_event(space, record), static_cast<std::int64_t>(e), "{}"});
          }
          const auto hits = query_by_component(index, space, roster[0].module_id, roster[0].attribute, kTop);
          std::size_t found = 0;
          for (const auto& h : hits) found += with_entity.contains(h.record_id) ? 1 : 0;
          all_found[s] = found == kOccurrences ? 1.0 : 0.0;
        },
        opt.threads);
    report.add("entity-all-in-top10", lsh.tables, all_found);
    const double ok = std::accumulate(all_found.begin(), all_found.end(), 0.0);
    report.check("recurring entity fully retrieved in >= 85% of streams", ok >= 0.85 * static_cast<double>(streams),
                 detail::fmt(ok) + "/" + std::to_string(streams));
  }
  report.set_wall_clock(detail::seconds_since(t0));
  return report;
}

/// Synthetic dictionary-learning problem: `samples` sketches y = sum_i c_i r_i
/// of k random unit atoms with random-sign coefficients of magnitude in
/// [0.5, 1.5].
struct DictionaryProblem {
  Eigen::MatrixXd truth;
  std::vector<Eigen::VectorXd> samples;
};

inline DictionaryProblem make_dictionary_problem(std::size_t dim, std::size_t atoms, std::size_t k,
                                                 std::size_t samples, std::uint64_t seed) {
  DictionaryProblem p;
  Stream rng = Stream::derive(seed, "dict/truth");
  p.truth.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(atoms));
  for (Eigen::Index j = 0; j < p.truth.cols(); ++j) p.truth.col(j) = simnet::random_unit(rng, dim);
  Stream draw = Stream::derive(seed, "dict/samples");
  std::vector<std::size_t> ids(atoms);
  for (std::size_t s = 0; s < samples; ++s) {
    std::iota(ids.begin(), ids.end(), std::size_t{0});
    Eigen::VectorXd y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
    for (std::size_t j = 0; j < k; ++j) {
      std::swap(ids[j], ids[j + static_cast<std::size_t>(draw.below(atoms - j))]);
      const double c = (draw.bernoulli(0.5) ? 1.0 : -1.0) * draw.uniform(0.5, 1.5);
      y += c * p.truth.col(static_cast<Eigen::Index>(ids[j]));
    }
    p.samples.push_back(std::move(y));
  }
  return p;
}

inline MetricsReport dict_recovery(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kDim = 64, kAtoms = 20, kSparsity = 3, kSamples = 2000, kIterations = 30;
  const auto problem = make_dictionary_problem(kDim, kAtoms, kSparsity, kSamples, opt.seed);
  const auto learned = learn_dictionary(problem.samples, {kAtoms, kSparsity, kIterations, opt.seed});
  const auto match = match_atoms(learned.atoms, problem.truth);
  MetricsReport report("dict-recovery", "iteration");
  report.add("energy", 0, {learned.initial_energy});
  for (std::size_t i = 0; i < learned.energies.size(); ++i) {
    report.add("energy", static_cast<double>(i + 1), {learned.energies[i]});
  }
  report.add("matched-cosine", static_cast<double>(kIterations), match.similarity);
  const auto matched = std::count_if(match.similarity.begin(), match.similarity.end(), [](double s) { return s >= 0.95; });
  bool monotone = learned.energies.empty() || learned.energies.front() <= learned.initial_energy;
  for (std::size_t i = 1; i < learned.energies.size(); ++i) {
    monotone = monotone && learned.energies[i] <= learned.energies[i - 1];
  }
  report.check(">= 18/20 atoms matched at |cosine| >= 0.95", matched >= 18,
               std::to_string(matched) + "/" + std::to_string(kAtoms));
  report.check("reconstruction energy non-increasing", monotone, "final " + detail::fmt(learned.energies.back()));
  const double elapsed = detail::seconds_since(t0);
  report.check("runtime <= 180 s", elapsed <= 180.0, "");
  report.set_extra("mean_matched_cosine", match.mean);
  report.set_wall_clock(elapsed);
  return report;
}

/// Held-out-module pipeline: 200 events, 20 of which contain a module absent
/// from the decoding registry. Residuals are pooled, clustered, and the top
/// cluster promoted; all events are then decoded again.
inline MetricsReport concept_e2e(const ExperimentOptions& opt) {
  const auto t0 = std::chrono::steady_clock::now();
  constexpr std::size_t kEvents = 200, kHeldOutEvents = 20, kKnown = 64;
  const std::size_t streams = opt.trials_or(1);
  const PoolConfig pool_cfg;
  const DecodeParams params{8, 1e-6, 0.05, 0.05};
  MetricsReport report("concept-e2e", "stream");

  std::vector<double> drop(streams), unchanged(streams), admit_held(streams), admit_other(streams),
      member_purity(streams), member_explained(streams), n_candidates(streams);
  for (std::size_t s = 0; s < streams; ++s) {
    const std::uint64_t seed = s == 0 ? opt.seed : mix_key(opt.seed, fnv1a("concept-e2e/stream"), s);
    simnet::NetworkParams net{kKnown, 8, 1, 0, 0, 1, 3, {}, false, seed};
    SketchConfig config;
    config.sketch_dim = 1024;
    config.global_seed = seed;
    auto cache = std::make_shared<MatrixCache>();
    ModuleRegistry known = simnet::gen_network(net);
    ModuleRegistry full = known;
    const ModuleId held_out = kKnown;
    full.add({held_out, 8, "held-out"});
    const SketchSpace sketch_space(config, full, cache);
    const SketchSpace decode_space(config, known, cache);

    // The held-out module's attributes come from a single tight cluster.
    simnet::NetworkParams held = net;
    held.attributes = {simnet::AttributeKind::kClustered, 1, 0.05};
    Stream rng = Stream::derive(seed, "concept-e2e/held-out");
    std::vector<std::size_t> order(kEvents);
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = 0; i < kHeldOutEvents; ++i) {
      std::swap(order[i], order[i + static_cast<std::size_t>(rng.below(kEvents - i))]);
    }
    const std::set<std::size_t> held_events(order.begin(), order.begin() + kHeldOutEvents);

    std::vector<Sketch> sketches(kEvents);
    for (std::size_t e = 0; e < kEvents; ++e) {
      auto record = simnet::gen_event(known, net, e);
      if (held_events.contains(e)) {
        const simnet::Entity entity{0, held_out, simnet::sample_attribute(held, held_out, 8, rng)};
        simnet::inject_entity(record, entity, net.k_fired_max + 1);
      }
      sketches[e] = sketch_event(sketch_space, record);
    }

    std::vector<DecodedLayer> before(kEvents);
    parallel_for(
        kEvents, [&](std::size_t e) { before[e] = block_omp_decode(decode_space, sketches[e], params); }, opt.threads);
    ResidualPool pool(pool_cfg.rho, pool_cfg.capacity);
    double held_admitted = 0, other_admitted = 0;
    for (std::size_t e = 0; e < kEvents; ++e) {
      const bool admitted = pool_admit(pool, e, before[e], static_cast<std::int64_t>(e));
      (held_events.contains(e) ? held_admitted : other_admitted) += admitted ? 1.0 : 0.0;
    }
    admit_held[s] = held_admitted / kHeldOutEvents;
    admit_other[s] = other_admitted / static_cast<double>(kEvents - kHeldOutEvents);

    const auto candidates = cluster_pool(pool, pool_cfg.tau_c, pool_cfg.m_min);
    n_candidates[s] = static_cast<double>(candidates.size());
    if (candidates.empty()) continue;
    const auto& top = candidates.front();
    double pure = 0;
    for (auto id : top.members) pure += held_events.contains(id) ? 1.0 : 0.0;
    member_purity[s] = pure / static_cast<double>(top.members.size());

    ModuleRegistry promoted = known;
    promote_concept(promoted, top, "concept-0");
    const SketchSpace after_space(config, promoted, cache);
    std::vector<DecodedLayer> after(kEvents);
    parallel_for(
        kEvents, [&](std::size_t e) { after[e] = block_omp_decode(after_space, sketches[e], params); }, opt.threads);

    double ratio_before = 0, ratio_after = 0, same = 0, explained = 0;
    for (std::size_t e = 0; e < kEvents; ++e) {
      if (held_events.contains(e)) {
        ratio_before += before[e].residual_ratio;
        ratio_after += after[e].residual_ratio;
      } else {
        same += before[e].support() == after[e].support() ? 1.0 : 0.0;
      }
    }
    for (auto id : top.members) explained += after[id].residual_ratio < pool_cfg.rho ? 1.0 : 0.0;
    drop[s] = ratio_before > 0 ? 1.0 - ratio_after / ratio_before : 0.0;
    unchanged[s] = same / static_cast<double>(kEvents - kHeldOutEvents);
    member_explained[s] = explained / static_cast<double>(top.members.size());
  }
  report.add("residual-ratio-drop", 0, drop);
  report.add("unrelated-support-unchanged", 0, unchanged);
  report.add("admission-held-out", 0, admit_held);
  report.add("admission-explained", 0, admit_other);
  report.add("candidate-count", 0, n_candidates);
  report.add("top-candidate-purity", 0, member_purity);
  report.add("members-explained-after", 0, member_explained);
  const double worst_drop = *std::min_element(drop.begin(), drop.end());
  const double worst_same = *std::min_element(unchanged.begin(), unchanged.end());
  report.check("held-out mean residual_ratio drops >= 50%", worst_drop >= 0.5, "min drop " + detail::fmt(worst_drop));
  report.check("unrelated decoded supports unchanged >= 95%", worst_same >= 0.95, "min " + detail::fmt(worst_same));
  report.set_wall_clock(detail::seconds_since(t0));
  return report;
}

inline const std::vector<std::string>& names() {
  static const std::vector<std::string> all{"dim-sweep",   "sparsity-sweep", "erasure-sweep", "lsh-recall",
                                            "stats-error", "dict-recovery",  "concept-e2e",   "attr-recovery",
                                            "tree-decode", "similarity"};
  return all;
}

inline MetricsReport run(const std::string& name, const ExperimentOptions& opt) {
  if (name == "dim-sweep") return dim_sweep(opt);
  if (name == "sparsity-sweep") return sparsity_sweep(opt);
  if (name == "erasure-sweep") return erasure_sweep(opt);
  if (name == "lsh-recall") return lsh_recall(opt);
  if (name == "stats-error") return stats_error(opt);
  if (name == "dict-recovery") return dict_recovery(opt);
  if (name == "concept-e2e") return concept_e2e(opt);
  if (name == "attr-recovery") return attr_recovery(opt);
  if (name == "tree-decode") return tree_decode(opt);
  if (name == "similarity") return similarity(opt);
  fail(ErrorKind::kConfig, "unknown experiment '" + name + "'");
}

}  // namespace experiments
}  // namespace sketchmem
