#pragma once

// Merged run configuration for the command-line tool. Every section maps onto
// the owning library type and is validated by it.

#include <cstdint>
#include <filesystem>
#include <string>

#include "sketchmem/aggregate.hpp"
#include "sketchmem/binary_io.hpp"
#include "sketchmem/memory_index.hpp"
#include "sketchmem/recovery.hpp"
#include "sketchmem/serialization.hpp"
#include "sketchmem/simnet.hpp"
#include "sketchmem/sketch.hpp"

namespace sketchmem {

struct DecodeConfig {
  DecodeParams params{8, 1e-6, 0.05, 0.05};
  std::size_t depth_limit = 2;

  void validate() const {
    require(params.k_max >= 1, ErrorKind::kConfig, "decode.k_max must be >= 1");
    require(params.epsilon >= 0.0 && params.epsilon < 1.0, ErrorKind::kConfig, "decode.epsilon must lie in [0, 1)");
    require(params.threshold >= 0.0, ErrorKind::kConfig, "decode.threshold must be >= 0");
    require(params.min_improvement >= 0.0 && params.min_improvement < 1.0, ErrorKind::kConfig,
            "decode.min_improvement must lie in [0, 1)");
    require(depth_limit >= 1, ErrorKind::kConfig, "decode.depth_limit must be >= 1");
  }
};

struct StatsConfig {
  ChannelSet channels{true, true, true, true};
  std::size_t buckets = 8;

  void validate() const {
    require(channels.moment1 || channels.moment2 || channels.count || channels.histogram, ErrorKind::kConfig,
            "stats.channels must select at least one channel");
    require(!channels.histogram || buckets >= 1, ErrorKind::kConfig, "stats.buckets must be >= 1");
  }
};

struct PoolConfig {
  double rho = 0.3;
  double tau_c = 0.7;
  std::size_t m_min = 5;
  std::size_t capacity = 10000;

  void validate() const {
    require(rho >= 0.0 && rho < 1.0, ErrorKind::kConfig, "pool.rho must lie in [0, 1)");
    require(tau_c > 0.0 && tau_c <= 1.0, ErrorKind::kConfig, "pool.tau_c must lie in (0, 1]");
    require(m_min >= 2, ErrorKind::kConfig, "pool.m_min must be >= 2");
    require(capacity >= 1, ErrorKind::kConfig, "pool.capacity must be >= 1");
  }
};

struct CorpusConfig {
  std::size_t n_events = 200;
  std::size_t entities = 0;  // roster size; 0 disables entity injection
  double recurrence = 0.1;

  void validate() const {
    require(recurrence >= 0.0 && recurrence <= 1.0, ErrorKind::kConfig, "corpus.recurrence must lie in [0, 1]");
  }
};

/// The single `seed` feeds every randomized component: it becomes the sketch
/// global seed, the network seed, and the LSH seed.
struct RunConfig {
  std::uint64_t seed = 0;
  SketchConfig sketch;
  simnet::NetworkParams network{64, 8, 2, 1, 2, 1, 3, {}, false, 0};
  LshParams lsh;
  DecodeConfig decode;
  StatsConfig stats;
  PoolConfig pool;
  CorpusConfig corpus;

  void set_seed(std::uint64_t s) {
    seed = s;
    sketch.global_seed = s;
    network.seed = s;
    lsh.seed = s;
  }

  void validate() const {
    sketch.validate();
    network.validate();
    lsh.validate();
    decode.validate();
    stats.validate();
    pool.validate();
    corpus.validate();
  }
};

namespace detail {

inline const char* attribute_kind_name(simnet::AttributeKind k) {
  return k == simnet::AttributeKind::kClustered ? "clustered" : "unit-gaussian-direction";
}

inline simnet::AttributeKind attribute_kind_from(const std::string& s) {
  if (s == "clustered") return simnet::AttributeKind::kClustered;
  if (s == "unit-gaussian-direction") return simnet::AttributeKind::kUnitGaussianDirection;
  fail(ErrorKind::kConfig, "unknown attribute kind '" + s + "'");
}

}  // namespace detail

inline Json run_config_to_json(const RunConfig& c) {
  Json sketch = sketch_config_to_json(c.sketch);
  sketch.erase("global_seed");
  const auto& n = c.network;
  Json channels = Json::array();
  if (c.stats.channels.moment1) channels.push_back("moment1");
  if (c.stats.channels.moment2) channels.push_back("moment2");
  if (c.stats.channels.count) channels.push_back("count");
  if (c.stats.channels.histogram) channels.push_back("histogram");
  return {
      {"seed", c.seed},
      {"sketch", std::move(sketch)},
      {"network",
       {{"modules", n.modules},
        {"output_dim", n.output_dim},
        {"depth", n.depth},
        {"fan_in_min", n.fan_in_min},
        {"fan_in_max", n.fan_in_max},
        {"k_fired_min", n.k_fired_min},
        {"k_fired_max", n.k_fired_max},
        {"attributes",
         {{"kind", detail::attribute_kind_name(n.attributes.kind)},
          {"clusters", n.attributes.clusters},
          {"noise", n.attributes.noise}}},
        {"dag_sharing", n.dag_sharing}}},
      {"lsh", {{"tables", c.lsh.tables}, {"hyperplanes", c.lsh.hyperplanes}}},
      {"decode",
       {{"threshold", c.decode.params.threshold},
        {"k_max", c.decode.params.k_max},
        {"epsilon", c.decode.params.epsilon},
        {"min_improvement", c.decode.params.min_improvement},
        {"depth_limit", c.decode.depth_limit}}},
      {"stats", {{"channels", std::move(channels)}, {"buckets", c.stats.buckets}}},
      {"pool", {{"rho", c.pool.rho}, {"tau_c", c.pool.tau_c}, {"m_min", c.pool.m_min}, {"capacity", c.pool.capacity}}},
      {"corpus",
       {{"n_events", c.corpus.n_events}, {"entities", c.corpus.entities}, {"recurrence", c.corpus.recurrence}}},
  };
}

/// Missing keys keep their defaults; unknown keys are config errors.
inline RunConfig run_config_from_json(const Json& j) {
  using detail::check_keys;
  using detail::read_field;
  RunConfig c;
  check_keys(j, {"seed", "sketch", "network", "lsh", "decode", "stats", "pool", "corpus"}, "config");
  std::uint64_t seed = 0;
  read_field(j, "seed", seed);
  if (j.contains("sketch")) {
    const auto& s = j.at("sketch");
    check_keys(s, {"sketch_dim", "attr_weight", "rec_weight"}, "sketch");
    read_field(s, "sketch_dim", c.sketch.sketch_dim);
    read_field(s, "attr_weight", c.sketch.attr_weight);
    read_field(s, "rec_weight", c.sketch.rec_weight);
  }
  if (j.contains("network")) {
    const auto& s = j.at("network");
    check_keys(s, {"modules", "output_dim", "depth", "fan_in_min", "fan_in_max", "k_fired_min", "k_fired_max",
                   "attributes", "dag_sharing"},
               "network");
    auto& n = c.network;
    read_field(s, "modules", n.modules);
    read_field(s, "output_dim", n.output_dim);
    read_field(s, "depth", n.depth);
    read_field(s, "fan_in_min", n.fan_in_min);
    read_field(s, "fan_in_max", n.fan_in_max);
    read_field(s, "k_fired_min", n.k_fired_min);
    read_field(s, "k_fired_max", n.k_fired_max);
    read_field(s, "dag_sharing", n.dag_sharing);
    if (s.contains("attributes")) {
      const auto& a = s.at("attributes");
      check_keys(a, {"kind", "clusters", "noise"}, "network.attributes");
      std::string kind = detail::attribute_kind_name(n.attributes.kind);
      read_field(a, "kind", kind);
      n.attributes.kind = detail::attribute_kind_from(kind);
      read_field(a, "clusters", n.attributes.clusters);
      read_field(a, "noise", n.attributes.noise);
    }
  }
  if (j.contains("lsh")) {
    const auto& s = j.at("lsh");
    check_keys(s, {"tables", "hyperplanes"}, "lsh");
    read_field(s, "tables", c.lsh.tables);
    read_field(s, "hyperplanes", c.lsh.hyperplanes);
  }
  if (j.contains("decode")) {
    const auto& s = j.at("decode");
    check_keys(s, {"threshold", "k_max", "epsilon", "min_improvement", "depth_limit"}, "decode");
    read_field(s, "threshold", c.decode.params.threshold);
    read_field(s, "k_max", c.decode.params.k_max);
    read_field(s, "epsilon", c.decode.params.epsilon);
    read_field(s, "min_improvement", c.decode.params.min_improvement);
    read_field(s, "depth_limit", c.decode.depth_limit);
  }
  if (j.contains("stats")) {
    const auto& s = j.at("stats");
    check_keys(s, {"channels", "buckets"}, "stats");
    if (s.contains("channels")) {
      try {
        c.stats.channels = channels_from_json(s.at("channels"));
      } catch (const Error& e) {
        fail(ErrorKind::kConfig, e.what());
      }
    }
    read_field(s, "buckets", c.stats.buckets);
  }
  if (j.contains("pool")) {
    const auto& s = j.at("pool");
    check_keys(s, {"rho", "tau_c", "m_min", "capacity"}, "pool");
    read_field(s, "rho", c.pool.rho);
    read_field(s, "tau_c", c.pool.tau_c);
    read_field(s, "m_min", c.pool.m_min);
    read_field(s, "capacity", c.pool.capacity);
  }
  if (j.contains("corpus")) {
    const auto& s = j.at("corpus");
    check_keys(s, {"n_events", "entities", "recurrence"}, "corpus");
    read_field(s, "n_events", c.corpus.n_events);
    read_field(s, "entities", c.corpus.entities);
    read_field(s, "recurrence", c.corpus.recurrence);
  }
  c.set_seed(seed);
  return c;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
  std::string text;
  try {
    const auto bytes = read_file_bytes(path);
    text.assign(bytes.begin(), bytes.end());
  } catch (const Error& e) {
    fail(ErrorKind::kConfig, std::string("cannot read config: ") + e.what());
  }
  Json j;
  try {
    j = Json::parse(text);
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::kConfig, "config is not valid JSON: " + path.string());
  }
  return run_config_from_json(j);
}

}  // namespace sketchmem
