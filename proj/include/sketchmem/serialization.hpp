#pragma once

// JSON forms of the library's exchange types (nlohmann::json).

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "sketchmem/aggregate.hpp"
#include "sketchmem/concepts.hpp"
#include "sketchmem/errors.hpp"
#include "sketchmem/record.hpp"
#include "sketchmem/recovery.hpp"
#include "sketchmem/sketch.hpp"

namespace sketchmem {

using Json = nlohmann::ordered_json;

inline Json vector_to_json(const Eigen::VectorXd& v) {
  Json out = Json::array();
  for (double x : v) out.push_back(x);
  return out;
}

inline Eigen::VectorXd vector_from_json(const Json& j) {
  require(j.is_array(), ErrorKind::kFormat, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    require(j[i].is_number(), ErrorKind::kFormat, "expected an array of numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

namespace detail {

/// Rejects keys outside `allowed`, so typos in config files fail loudly.
inline void check_keys(const Json& j, std::initializer_list<std::string_view> allowed, std::string_view where,
                       ErrorKind kind = ErrorKind::kConfig) {
  require(j.is_object(), kind, std::string(where) + " must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (auto a : allowed) ok = ok || key == a;
    require(ok, kind, "unknown key '" + key + "' in " + std::string(where));
  }
}

template <class T>
void read_field(const Json& j, const char* key, T& out, ErrorKind kind = ErrorKind::kConfig) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(kind, std::string("invalid value for '") + key + "'");
  }
}

template <class T>
T required_field(const Json& j, const char* key, ErrorKind kind = ErrorKind::kFormat) {
  require(j.contains(key), kind, std::string("missing key '") + key + "'");
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    fail(kind, std::string("invalid value for '") + key + "'");
  }
}

}  // namespace detail

inline Json sketch_config_to_json(const SketchConfig& c) {
  return {{"sketch_dim", c.sketch_dim},
          {"global_seed", c.global_seed},
          {"attr_weight", c.attr_weight},
          {"rec_weight", c.rec_weight}};
}

inline SketchConfig sketch_config_from_json(const Json& j) {
  detail::check_keys(j, {"sketch_dim", "global_seed", "attr_weight", "rec_weight"}, "sketch config");
  SketchConfig c;
  detail::read_field(j, "sketch_dim", c.sketch_dim);
  detail::read_field(j, "global_seed", c.global_seed);
  detail::read_field(j, "attr_weight", c.attr_weight);
  detail::read_field(j, "rec_weight", c.rec_weight);
  c.validate();
  return c;
}

inline Json decoded_tree_to_json(const DecodedTree& t) {
  Json children = Json::array();
  for (const auto& c : t.children) children.push_back(decoded_tree_to_json(c));
  return {{"module_id", t.module_id},
          {"attribute", vector_to_json(t.attribute)},
          {"confidence", t.confidence},
          {"children", std::move(children)}};
}

inline DecodedTree decoded_tree_from_json(const Json& j) {
  DecodedTree t;
  t.module_id = detail::required_field<ModuleId>(j, "module_id");
  t.attribute = vector_from_json(j.at("attribute"));
  t.confidence = detail::required_field<double>(j, "confidence");
  for (const auto& c : j.value("children", Json::array())) t.children.push_back(decoded_tree_from_json(c));
  return t;
}

// ---- event corpus (JSON lines) ----

struct CorpusEvent {
  std::uint64_t event_id = 0;
  ComputationRecord record;
  std::vector<std::uint64_t> entities;
};

inline Json event_to_json(const CorpusEvent& ev) {
  Json nodes = Json::array();
  for (const auto& n : ev.record.nodes) {
    nodes.push_back({{"node_id", n.node_id},
                     {"module_id", n.module_id},
                     {"x", vector_to_json(n.output)},
                     {"children", n.children}});
  }
  return {{"event_id", ev.event_id}, {"nodes", std::move(nodes)}, {"roots", ev.record.roots}, {"entities", ev.entities}};
}

inline CorpusEvent event_from_json(const Json& j) {
  detail::check_keys(j, {"event_id", "nodes", "roots", "entities"}, "event", ErrorKind::kFormat);
  CorpusEvent ev;
  ev.event_id = detail::required_field<std::uint64_t>(j, "event_id");
  const auto& nodes = j.at("nodes");
  require(nodes.is_array(), ErrorKind::kFormat, "'nodes' must be an array");
  for (const auto& n : nodes) {
    detail::check_keys(n, {"node_id", "module_id", "x", "children"}, "node", ErrorKind::kFormat);
    RecordNode node;
    node.node_id = detail::required_field<NodeId>(n, "node_id");
    node.module_id = detail::required_field<ModuleId>(n, "module_id");
    require(n.contains("x"), ErrorKind::kFormat, "missing key 'x'");
    node.output = vector_from_json(n.at("x"));
    node.children = detail::required_field<std::vector<NodeId>>(n, "children");
    ev.record.nodes.push_back(std::move(node));
  }
  ev.record.roots = detail::required_field<std::vector<NodeId>>(j, "roots");
  if (j.contains("entities")) ev.entities = detail::required_field<std::vector<std::uint64_t>>(j, "entities");
  try {
    ev.record.validate();
  } catch (const Error& e) {
    fail(ErrorKind::kFormat, e.what());
  }
  return ev;
}

/// First line is a header {"format", "version", "events", "config"}; one
/// event document per following line.
inline std::string write_corpus(std::span<const CorpusEvent> events, const Json& config_echo) {
  std::string out;
  const Json header{{"format", "sketchmem-corpus"}, {"version", 1}, {"events", events.size()}, {"config", config_echo}};
  out += header.dump();
  out += '\n';
  for (const auto& ev : events) {
    out += event_to_json(ev).dump();
    out += '\n';
  }
  return out;
}

struct Corpus {
  Json config;
  std::vector<CorpusEvent> events;
};

/// Errors carry the 1-based line number of the offending line.
inline Corpus read_corpus(std::string_view text) {
  Corpus corpus;
  std::size_t line_no = 0;
  std::size_t expected = 0;
  bool have_header = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t end = text.find('\n', pos);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;
    const auto where = "corpus line " + std::to_string(line_no) + ": ";
    Json j;
    try {
      j = Json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::kFormat, where + "malformed JSON");
    }
    try {
      if (!have_header) {
        require(j.value("format", "") == "sketchmem-corpus", ErrorKind::kFormat, "missing corpus header");
        require(j.value("version", 0) == 1, ErrorKind::kFormat, "unsupported corpus version");
        expected = detail::required_field<std::size_t>(j, "events");
        corpus.config = j.value("config", Json::object());
        have_header = true;
        continue;
      }
      corpus.events.push_back(event_from_json(j));
    } catch (const Error& e) {
      fail(e.kind(), where + e.what());
    }
  }
  require(have_header, ErrorKind::kFormat, "corpus line 1: missing corpus header");
  require(corpus.events.size() == expected, ErrorKind::kFormat,
          "corpus header declares " + std::to_string(expected) + " events, found " +
              std::to_string(corpus.events.size()));
  return corpus;
}

// ---- collection header ----

inline Json collection_header_to_json(const CollectionSketch& cs) {
  Json channels = Json::array();
  if (cs.channels.moment1) channels.push_back("moment1");
  if (cs.channels.moment2) channels.push_back("moment2");
  if (cs.channels.count) channels.push_back("count");
  if (cs.channels.histogram) channels.push_back("histogram");
  Json j{{"type_id", cs.type_id}, {"channels", std::move(channels)}};
  if (cs.quantizer) {
    // The infinite outer edges are implied.
    const auto& e = cs.quantizer->edges;
    j["bucket_edges"] = std::vector<double>(e.begin() + 1, e.end() - 1);
    j["direction"] = vector_to_json(cs.quantizer->direction);
  }
  return j;
}

inline ChannelSet channels_from_json(const Json& j) {
  require(j.is_array(), ErrorKind::kFormat, "'channels' must be an array");
  ChannelSet c{false, false, false, false};
  for (const auto& name : j) {
    require(name.is_string(), ErrorKind::kFormat, "channel names must be strings");
    const auto s = name.get<std::string>();
    if (s == "moment1") {
      c.moment1 = true;
    } else if (s == "moment2") {
      c.moment2 = true;
    } else if (s == "count") {
      c.count = true;
    } else if (s == "histogram") {
      c.histogram = true;
    } else {
      fail(ErrorKind::kFormat, "unknown channel '" + s + "'");
    }
  }
  return c;
}

inline CollectionSketch collection_from_json(const Json& header, Sketch sketch) {
  CollectionSketch cs;
  cs.sketch = std::move(sketch);
  cs.type_id = detail::required_field<ModuleId>(header, "type_id");
  cs.channels = channels_from_json(header.at("channels"));
  if (header.contains("bucket_edges")) {
    Quantizer q;
    q.direction = vector_from_json(header.at("direction"));
    q.edges.push_back(-std::numeric_limits<double>::infinity());
    for (double e : detail::required_field<std::vector<double>>(header, "bucket_edges")) q.edges.push_back(e);
    q.edges.push_back(std::numeric_limits<double>::infinity());
    try {
      q.validate();
    } catch (const Error& e) {
      fail(ErrorKind::kFormat, e.what());
    }
    cs.quantizer = std::move(q);
  }
  require(cs.channels.histogram == cs.quantizer.has_value(), ErrorKind::kFormat,
          "histogram channel and bucket_edges must appear together");
  return cs;
}

inline Json candidate_to_json(const ConceptCandidate& c) {
  return {{"centroid", vector_to_json(c.centroid)}, {"members", c.members}, {"cohesion", c.cohesion}};
}

inline ConceptCandidate candidate_from_json(const Json& j) {
  ConceptCandidate c;
  c.centroid = vector_from_json(j.at("centroid"));
  c.members = detail::required_field<std::vector<std::uint64_t>>(j, "members");
  c.cohesion = detail::required_field<double>(j, "cohesion");
  return c;
}

}  // namespace sketchmem
