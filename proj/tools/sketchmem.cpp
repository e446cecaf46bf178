// sketchmem: command-line front end.
//
//   gen -> sketch -> {decode, index, dict, concepts}; eval runs experiments.
//
// Exit codes: 0 ok, 2 config, 3 input/format, 4 capacity/underdetermined,
// 5 acceptance-gate failure.

#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sketchmem/config.hpp"
#include "sketchmem/experiments.hpp"
#include "sketchmem/sketchmem.hpp"

namespace fs = std::filesystem;
using namespace sketchmem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitInput = 3;
constexpr int kExitCapacity = 4;
constexpr int kExitGate = 5;

int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return kExitConfig;
    case ErrorKind::kCapacity:
    case ErrorKind::kUnderdetermined: return kExitCapacity;
    default: return kExitInput;
  }
}

struct Globals {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out;
};

RunConfig effective_config(const Globals& g) {
  RunConfig c = g.config_path.empty() ? RunConfig{} : load_run_config(g.config_path);
  if (g.seed) c.set_seed(*g.seed);
  c.validate();
  return c;
}

void require_out(const Globals& g) {
  require(!g.out.empty(), ErrorKind::kConfig, "--out is required");
}

std::string read_text(const fs::path& p) {
  const auto bytes = read_file_bytes(p);
  return {bytes.begin(), bytes.end()};
}

void write_json(const fs::path& p, const Json& j) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  write_file_atomic(p, j.dump(2) + "\n");
}

SketchSpace make_space(const RunConfig& c) { return SketchSpace(c.sketch, simnet::gen_network(c.network)); }

// ---- archive (directory of .skch files plus manifest.json) ----

struct Archive {
  Json config;
  std::vector<std::uint64_t> event_ids;
  std::vector<Sketch> sketches;
};

std::string sketch_file_name(std::uint64_t id) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08llu.skch", static_cast<unsigned long long>(id));
  return buf;
}

Archive load_archive(const fs::path& dir) {
  Json manifest;
  try {
    manifest = Json::parse(read_text(dir / "manifest.json"));
  } catch (const nlohmann::json::exception&) {
    fail(ErrorKind::kFormat, "manifest.json is not valid JSON");
  }
  Archive a;
  a.config = manifest.value("config", Json::object());
  const auto& events = manifest.at("events");
  require(events.is_array(), ErrorKind::kFormat, "manifest 'events' must be an array");
  for (const auto& e : events) {
    const auto id = detail::required_field<std::uint64_t>(e, "event_id");
    const auto file = detail::required_field<std::string>(e, "file");
    a.event_ids.push_back(id);
    a.sketches.push_back(load_sketch(dir / file));
  }
  return a;
}

void check_dims(const std::vector<Sketch>& sketches, std::size_t dim) {
  for (const auto& s : sketches) {
    require(s.dim() == dim, ErrorKind::kInvalidInput,
            "sketch dimension " + std::to_string(s.dim()) + " does not match config sketch_dim " + std::to_string(dim));
  }
}

/// Promoted concept atoms recorded by `concepts --promote`.
void add_promoted(ModuleRegistry& registry, const std::string& path) {
  if (path.empty()) return;
  const Json j = Json::parse(read_text(path));
  for (const auto& p : j.value("promoted", Json::array())) {
    const auto expected = detail::required_field<ModuleId>(p, "module_id");
    const auto id = registry.add_atom_module(vector_from_json(p.at("atom")), p.value("label", "concept"));
    require(id == expected, ErrorKind::kFormat, "promoted module id does not match the registry");
  }
}

// ---- commands ----

int cmd_gen(const Globals& g, std::optional<std::size_t> n_events) {
  require_out(g);
  RunConfig c = effective_config(g);
  if (n_events) c.corpus.n_events = *n_events;
  const auto registry = simnet::gen_network(c.network);
  std::vector<CorpusEvent> events(c.corpus.n_events);
  if (c.corpus.entities > 0 && c.corpus.n_events > 0) {
    const auto roster = simnet::make_roster(registry, c.network, c.corpus.entities, 0);
    auto stream = simnet::gen_event_stream(registry, c.network, roster, c.corpus.n_events, c.corpus.recurrence, 0);
    for (std::size_t e = 0; e < events.size(); ++e) {
      events[e] = {e, std::move(stream[e].record), std::move(stream[e].entities)};
    }
  } else {
    parallel_for(events.size(), [&](std::size_t e) { events[e] = {e, simnet::gen_event(registry, c.network, e), {}}; });
  }
  const fs::path out(g.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file_atomic(out, write_corpus(events, run_config_to_json(c)));
  std::cout << events.size() << " events\n";
  return kExitOk;
}

int cmd_sketch(const Globals& g, const std::string& corpus_path) {
  require_out(g);
  const RunConfig c = effective_config(g);
  const Corpus corpus = read_corpus(read_text(corpus_path));
  const SketchSpace space = make_space(c);
  const fs::path dir(g.out);
  fs::create_directories(dir);
  std::vector<std::vector<std::uint8_t>> blobs(corpus.events.size());
  parallel_for(blobs.size(), [&](std::size_t i) {
    blobs[i] = sketch_to_bytes(sketch_event(space, corpus.events[i].record));
  });
  Json entries = Json::array();
  std::set<std::uint64_t> seen;
  for (std::size_t i = 0; i < blobs.size(); ++i) {
    const auto id = corpus.events[i].event_id;
    require(seen.insert(id).second, ErrorKind::kFormat, "duplicate event_id " + std::to_string(id));
    const auto name = sketch_file_name(id);
    write_file_atomic(dir / name, blobs[i]);
    entries.push_back({{"event_id", id}, {"file", name}});
  }
  write_json(dir / "manifest.json", {{"config", run_config_to_json(c)}, {"count", blobs.size()}, {"events", entries}});
  std::cout << blobs.size() << " sketches\n";
  return kExitOk;
}

struct DepthTally {
  double hits = 0, decoded = 0, truth = 0;
};

/// Module-id paths from the root (root = depth 1) of a ground-truth record.
void truth_paths(const ComputationRecord& r, NodeId n, std::vector<ModuleId> path,
                 std::map<std::size_t, std::multiset<std::vector<ModuleId>>>& out, std::size_t depth_limit) {
  path.push_back(r.node(n).module_id);
  out[path.size()].insert(path);
  if (path.size() >= depth_limit) return;
  for (NodeId c : r.node(n).children) truth_paths(r, c, path, out, depth_limit);
}

void decoded_paths(const DecodedTree& t, std::vector<ModuleId> path,
                   std::map<std::size_t, std::multiset<std::vector<ModuleId>>>& out) {
  path.push_back(t.module_id);
  out[path.size()].insert(path);
  for (const auto& c : t.children) decoded_paths(c, path, out);
}

int cmd_decode(const Globals& g, const std::string& sketch_dir, const std::string& corpus_path,
               std::optional<std::size_t> depth_limit, const std::string& concepts_path) {
  require_out(g);
  RunConfig c = effective_config(g);
  if (depth_limit) c.decode.depth_limit = *depth_limit;
  c.decode.validate();
  const Archive archive = load_archive(sketch_dir);
  check_dims(archive.sketches, c.sketch.sketch_dim);
  ModuleRegistry registry = simnet::gen_network(c.network);
  add_promoted(registry, concepts_path);
  const SketchSpace space(c.sketch, registry);

  std::vector<std::vector<DecodedTree>> trees(archive.sketches.size());
  parallel_for(trees.size(), [&](std::size_t i) {
    trees[i] = decode_tree(space, archive.sketches[i], c.decode.depth_limit, c.decode.params);
  });

  Json events = Json::array();
  for (std::size_t i = 0; i < trees.size(); ++i) {
    Json t = Json::array();
    for (const auto& tree : trees[i]) t.push_back(decoded_tree_to_json(tree));
    events.push_back({{"event_id", archive.event_ids[i]}, {"trees", std::move(t)}});
  }
  Json summary{{"trials", trees.size()}};
  if (!corpus_path.empty()) {
    const Corpus corpus = read_corpus(read_text(corpus_path));
    std::map<std::uint64_t, const ComputationRecord*> by_id;
    for (const auto& ev : corpus.events) by_id[ev.event_id] = &ev.record;
    std::map<std::size_t, DepthTally> tally;
    double exact_roots = 0, compared = 0;
    for (std::size_t i = 0; i < trees.size(); ++i) {
      auto it = by_id.find(archive.event_ids[i]);
      if (it == by_id.end()) continue;
      ++compared;
      std::map<std::size_t, std::multiset<std::vector<ModuleId>>> truth, got;
      for (NodeId r : it->second->roots) truth_paths(*it->second, r, {}, truth, c.decode.depth_limit);
      for (const auto& tr : trees[i]) decoded_paths(tr, {}, got);
      for (std::size_t depth = 1; depth <= c.decode.depth_limit; ++depth) {
        auto& t = tally[depth];
        const auto& a = truth[depth];
        const auto& b = got[depth];
        std::vector<std::vector<ModuleId>> common;
        std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
        t.hits += static_cast<double>(common.size());
        t.truth += static_cast<double>(a.size());
        t.decoded += static_cast<double>(b.size());
      }
      exact_roots += truth[1] == got[1] ? 1.0 : 0.0;
    }
    Json depths = Json::array();
    for (const auto& [depth, t] : tally) {
      depths.push_back({{"depth", depth},
                        {"precision", t.decoded > 0 ? t.hits / t.decoded : 1.0},
                        {"recall", t.truth > 0 ? t.hits / t.truth : 1.0},
                        {"truth", t.truth},
                        {"decoded", t.decoded}});
    }
    summary["compared"] = compared;
    summary["root_support_exact"] = compared > 0 ? exact_roots / compared : 0.0;
    summary["depths"] = std::move(depths);
  }
  write_json(g.out, {{"config", run_config_to_json(c)}, {"summary", summary}, {"events", std::move(events)}});
  std::cout << trees.size() << " decoded\n";
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& experiment, std::size_t trials) {
  require_out(g);
  const RunConfig c = effective_config(g);
  ExperimentOptions opt;
  opt.seed = c.seed;
  opt.trials = trials;
  auto report = experiments::run(experiment, opt);
  report.set_config(run_config_to_json(c));
  const fs::path out(g.out);
  write_json(fs::path(g.out + ".json"), report.to_json());
  const auto csv = report.to_csv();
  const auto primary = report.series().front();
  for (const auto& [series, text] : csv) {
    write_file_atomic(fs::path(series == primary ? g.out + ".csv" : g.out + "." + series + ".csv"), text);
  }
  for (const auto& check : report.checks()) {
    std::cout << (check.passed ? "PASS " : "FAIL ") << check.name << (check.detail.empty() ? "" : " (" + check.detail + ")")
              << "\n";
  }
  std::cout << "wall clock " << report.wall_clock() << " s\n";
  return report.gate() ? kExitOk : kExitGate;
}

int cmd_index_build(const Globals& g, const std::string& sketch_dir) {
  require_out(g);
  const RunConfig c = effective_config(g);
  const Archive archive = load_archive(sketch_dir);
  check_dims(archive.sketches, c.sketch.sketch_dim);
  MemoryIndex index(c.sketch.sketch_dim, c.lsh);
  for (std::size_t i = 0; i < archive.sketches.size(); ++i) {
    const auto id = archive.event_ids[i];
    index.insert({id, archive.sketches[i], static_cast<std::int64_t>(id), Json{{"event_id", id}}.dump()});
  }
  const fs::path out(g.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  index.save(out);
  std::cout << index.size() << " records\n";
  return kExitOk;
}

int cmd_index_query(const Globals& g, const std::string& index_path, const std::string& sketch_path, std::size_t k,
                    bool exact) {
  require_out(g);
  const RunConfig c = effective_config(g);
  const MemoryIndex index = MemoryIndex::load(index_path);
  const Sketch probe = load_sketch(sketch_path);
  QueryStats stats;
  const auto hits = exact ? index.exact_scan(probe, k) : index.query(probe, k, &stats);
  Json j = Json::array();
  for (const auto& h : hits) j.push_back({{"record_id", h.record_id}, {"similarity", h.similarity}});
  write_json(g.out, {{"config", run_config_to_json(c)},
                     {"mode", exact ? "exact" : "lsh"},
                     {"candidates", exact ? index.size() : stats.candidates},
                     {"hits", std::move(j)}});
  for (const auto& h : hits) std::cout << h.record_id << " " << h.similarity << "\n";
  return kExitOk;
}

int cmd_index_graph(const Globals& g, const std::string& index_path, double tau) {
  require_out(g);
  const RunConfig c = effective_config(g);
  const MemoryIndex index = MemoryIndex::load(index_path);
  const auto edges = index.knowledge_graph(tau);
  Json j = Json::array();
  for (const auto& e : edges) j.push_back({{"a", e.a}, {"b", e.b}, {"similarity", e.similarity}});
  write_json(g.out, {{"config", run_config_to_json(c)}, {"tau", tau}, {"edges", std::move(j)}});
  std::cout << edges.size() << " edges\n";
  return kExitOk;
}

struct DictArgs {
  std::size_t dim = 64, atoms = 20, sparsity = 3, samples = 2000, iterations = 30;
  std::string samples_path, truth_path;
};

int cmd_dict_corpus(const Globals& g, const DictArgs& a) {
  require_out(g);
  const RunConfig c = effective_config(g);
  const auto problem = experiments::make_dictionary_problem(a.dim, a.atoms, a.sparsity, a.samples, c.seed);
  std::vector<Sketch> samples, truth;
  for (const auto& y : problem.samples) samples.emplace_back(y);
  for (Eigen::Index j = 0; j < problem.truth.cols(); ++j) truth.emplace_back(Eigen::VectorXd(problem.truth.col(j)));
  const fs::path dir(g.out);
  fs::create_directories(dir);
  write_file_atomic(dir / "samples.skchs", sketch_stream_to_bytes(samples));
  write_file_atomic(dir / "truth.skchs", sketch_stream_to_bytes(truth));
  std::cout << samples.size() << " samples, " << truth.size() << " atoms\n";
  return kExitOk;
}

int cmd_dict_learn(const Globals& g, const DictArgs& a) {
  require_out(g);
  const RunConfig c = effective_config(g);
  const auto stream = sketch_stream_from_bytes(read_file_bytes(a.samples_path));
  std::vector<Eigen::VectorXd> samples;
  for (const auto& s : stream) samples.push_back(s.values());
  require(!samples.empty(), ErrorKind::kInvalidInput, "sample stream is empty");
  const auto learned = learn_dictionary(samples, {a.atoms, a.sparsity, a.iterations, c.seed});
  std::vector<Sketch> atoms;
  for (Eigen::Index j = 0; j < learned.atoms.cols(); ++j) atoms.emplace_back(Eigen::VectorXd(learned.atoms.col(j)));
  const fs::path out(g.out);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  write_file_atomic(out, sketch_stream_to_bytes(atoms));
  Json report{{"config", run_config_to_json(c)},
              {"atoms", a.atoms},
              {"sparsity", a.sparsity},
              {"iterations", a.iterations},
              {"initial_energy", learned.initial_energy},
              {"energies", learned.energies}};
  if (!a.truth_path.empty()) {
    const auto truth_stream = sketch_stream_from_bytes(read_file_bytes(a.truth_path));
    Eigen::MatrixXd truth(learned.atoms.rows(), static_cast<Eigen::Index>(truth_stream.size()));
    for (std::size_t j = 0; j < truth_stream.size(); ++j) {
      require(truth_stream[j].dim() == static_cast<std::size_t>(truth.rows()), ErrorKind::kInvalidInput,
              "truth atom dimension mismatch");
      truth.col(static_cast<Eigen::Index>(j)) = truth_stream[j].values();
    }
    const auto match = match_atoms(learned.atoms, truth);
    report["mean_matched_cosine"] = match.mean;
    report["matched_cosines"] = match.similarity;
    report["assignment"] = match.assignment;
    std::cout << "mean matched |cosine| " << match.mean << "\n";
  }
  write_json(g.out + ".json", report);
  return kExitOk;
}

int cmd_concepts(const Globals& g, const std::string& sketch_dir, bool promote) {
  require_out(g);
  const RunConfig c = effective_config(g);
  const Archive archive = load_archive(sketch_dir);
  check_dims(archive.sketches, c.sketch.sketch_dim);
  ModuleRegistry registry = simnet::gen_network(c.network);
  const SketchSpace space(c.sketch, registry);
  std::vector<DecodedLayer> layers(archive.sketches.size());
  parallel_for(layers.size(), [&](std::size_t i) {
    layers[i] = block_omp_decode(space, archive.sketches[i], c.decode.params);
  });
  ResidualPool pool(c.pool.rho, c.pool.capacity);
  std::size_t admitted = 0;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    admitted += pool_admit(pool, archive.event_ids[i], layers[i], static_cast<std::int64_t>(archive.event_ids[i]));
  }
  const auto candidates = cluster_pool(pool, c.pool.tau_c, c.pool.m_min);
  Json cands = Json::array();
  for (const auto& cand : candidates) cands.push_back(candidate_to_json(cand));
  Json promoted = Json::array();
  if (promote) {
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const std::string label = "concept-" + std::to_string(i);
      const auto id = promote_concept(registry, candidates[i], label);
      promoted.push_back({{"module_id", id}, {"label", label}, {"atom", vector_to_json(candidates[i].centroid)}});
    }
  }
  write_json(g.out, {{"config", run_config_to_json(c)},
                     {"admitted", admitted},
                     {"candidates", std::move(cands)},
                     {"promoted", std::move(promoted)}});
  std::cout << admitted << " admitted, " << candidates.size() << " candidates\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sketchmem: recursive sketches of modular computations"};
  app.require_subcommand(1);
  Globals g;
  std::uint64_t seed_value = 0;
  auto add_globals = [&](CLI::App* cmd) {
    cmd->add_option("--config", g.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", seed_value, "override the config seed");
    cmd->add_option("--out", g.out, "output path");
  };

  auto* gen = app.add_subcommand("gen", "generate a synthetic event corpus (JSON lines)");
  std::optional<std::size_t> n_events;
  add_globals(gen);
  gen->add_option("--events", n_events, "number of events (overrides corpus.n_events)");

  auto* sketch = app.add_subcommand("sketch", "sketch every corpus event into a directory archive");
  std::string corpus_path;
  add_globals(sketch);
  sketch->add_option("--corpus", corpus_path, "corpus file")->required();

  auto* decode = app.add_subcommand("decode", "decode a sketch archive into module trees");
  std::string sketch_dir, truth_corpus, concepts_path;
  std::optional<std::size_t> depth_limit;
  add_globals(decode);
  decode->add_option("--sketches", sketch_dir, "sketch archive directory")->required();
  decode->add_option("--corpus", truth_corpus, "ground-truth corpus for accuracy summary");
  decode->add_option("--depth-limit", depth_limit, "decode depth (1 = roots only)");
  decode->add_option("--concepts", concepts_path, "concepts output whose promoted atoms join the registry");

  auto* eval = app.add_subcommand("eval", "run a Monte Carlo experiment");
  std::string experiment;
  std::size_t trials = 0;
  add_globals(eval);
  eval->add_option("--experiment", experiment, "experiment name")
      ->required()
      ->check(CLI::IsMember(experiments::names()));
  eval->add_option("--trials", trials, "trials per point (0 = experiment default)");

  auto* index = app.add_subcommand("index", "LSH sketch memory");
  index->require_subcommand(1);
  auto* build = index->add_subcommand("build", "index a sketch archive");
  add_globals(build);
  build->add_option("--sketches", sketch_dir, "sketch archive directory")->required();
  auto* query = index->add_subcommand("query", "nearest stored sketches to a probe");
  std::string index_path, probe_path;
  std::size_t top_k = 10;
  bool exact = false;
  add_globals(query);
  query->add_option("--index", index_path, "index file")->required();
  query->add_option("--sketch", probe_path, "probe sketch (.skch)")->required();
  query->add_option("-k", top_k, "number of hits");
  query->add_flag("--exact", exact, "linear scan instead of LSH");
  auto* graph = index->add_subcommand("graph", "implicit knowledge-graph edges");
  double tau = 0.9;
  add_globals(graph);
  graph->add_option("--index", index_path, "index file")->required();
  graph->add_option("--tau", tau, "cosine threshold")->required();

  auto* dict = app.add_subcommand("dict", "dictionary learning");
  dict->require_subcommand(1);
  DictArgs dargs;
  auto* dict_corpus = dict->add_subcommand("corpus", "write the synthetic dictionary-recovery corpus");
  add_globals(dict_corpus);
  dict_corpus->add_option("--dim", dargs.dim);
  dict_corpus->add_option("--atoms", dargs.atoms);
  dict_corpus->add_option("--sparsity", dargs.sparsity);
  dict_corpus->add_option("--samples", dargs.samples);
  auto* dict_learn = dict->add_subcommand("learn", "learn atoms from a sketch stream");
  add_globals(dict_learn);
  dict_learn->add_option("--samples", dargs.samples_path, "sample stream (.skchs)")->required();
  dict_learn->add_option("--truth", dargs.truth_path, "true atoms for matching (.skchs)");
  dict_learn->add_option("--atoms", dargs.atoms);
  dict_learn->add_option("--sparsity", dargs.sparsity);
  dict_learn->add_option("--iterations", dargs.iterations);

  auto* concepts = app.add_subcommand("concepts", "pool unexplained residuals and cluster them");
  bool promote = false;
  add_globals(concepts);
  concepts->add_option("--sketches", sketch_dir, "sketch archive directory")->required();
  concepts->add_flag("--promote", promote, "register every candidate as a new module");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  auto seed_given = [&](CLI::App* cmd) { return cmd->count("--seed") > 0; };
  try {
    for (auto* cmd : {gen, sketch, decode, eval, build, query, graph, dict_corpus, dict_learn, concepts}) {
      if (cmd->parsed() && seed_given(cmd)) g.seed = seed_value;
    }
    if (gen->parsed()) return cmd_gen(g, n_events);
    if (sketch->parsed()) return cmd_sketch(g, corpus_path);
    if (decode->parsed()) return cmd_decode(g, sketch_dir, truth_corpus, depth_limit, concepts_path);
    if (eval->parsed()) return cmd_eval(g, experiment, trials);
    if (build->parsed()) return cmd_index_build(g, sketch_dir);
    if (query->parsed()) return cmd_index_query(g, index_path, probe_path, top_k, exact);
    if (graph->parsed()) return cmd_index_graph(g, index_path, tau);
    if (dict_corpus->parsed()) return cmd_dict_corpus(g, dargs);
    if (dict_learn->parsed()) return cmd_dict_learn(g, dargs);
    if (concepts->parsed()) return cmd_concepts(g, sketch_dir, promote);
  } catch (const Error& e) {
    std::cerr << "sketchmem: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "sketchmem: format error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "sketchmem: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitConfig;
}
