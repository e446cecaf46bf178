#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "sketchmem/config.hpp"
#include "support.hpp"

namespace sketchmem {
namespace {

using testing::kind_of;

CorpusEvent sample_event(std::uint64_t id) {
  simnet::NetworkParams p{16, 3, 2, 1, 2, 1, 3, {}, true, 4};
  return {id, simnet::gen_event(simnet::gen_network(p), p, id), {2, 5}};
}

TEST(Json, VectorsRoundTripExactly) {
  Eigen::VectorXd v(4);
  v << 0.1, -1e-300, 12345.678901234567, 1.0 / 3.0;
  const auto text = vector_to_json(v).dump();
  EXPECT_EQ(vector_from_json(Json::parse(text)), v);
  EXPECT_EQ(kind_of([] { vector_from_json(Json::parse(R"([1, "x"])")); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([] { vector_from_json(Json::parse(R"({"a": 1})")); }), ErrorKind::kFormat);
}

TEST(Corpus, RoundTrip) {
  std::vector<CorpusEvent> events;
  for (std::uint64_t i = 0; i < 6; ++i) events.push_back(sample_event(i));
  const Json echo{{"seed", 4}};
  const auto text = write_corpus(events, echo);
  const auto corpus = read_corpus(text);
  EXPECT_EQ(corpus.config, echo);
  ASSERT_EQ(corpus.events.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(corpus.events[i].event_id, i);
    EXPECT_EQ(corpus.events[i].entities, events[i].entities);
    EXPECT_EQ(event_to_json(corpus.events[i]), event_to_json(events[i]));
  }
  EXPECT_EQ(write_corpus(corpus.events, corpus.config), text);
}

TEST(Corpus, EmptyCorpusIsJustTheHeader) {
  const std::vector<CorpusEvent> none;
  const auto text = write_corpus(none, Json::object());
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 1);
  EXPECT_TRUE(read_corpus(text).events.empty());
}

TEST(Corpus, ErrorsNameTheLine) {
  std::vector<CorpusEvent> events{sample_event(0), sample_event(1)};
  const auto text = write_corpus(events, Json::object());
  const auto first_break = text.find('\n');
  const auto second_break = text.find('\n', first_break + 1);

  auto expect_line = [](const std::string& bad, const std::string& needle) {
    try {
      (void)read_corpus(bad);
      ADD_FAILURE() << "no error";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kFormat);
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_line(text.substr(0, second_break + 1) + "{not json\n", "corpus line 3");
  auto cyclic = event_to_json(events[1]);
  cyclic["nodes"][0]["children"] = Json::array({0});
  expect_line(text.substr(0, second_break + 1) + cyclic.dump() + "\n", "corpus line 3");
  auto extra = event_to_json(events[0]);
  extra["bogus"] = 1;
  expect_line(text.substr(0, first_break + 1) + extra.dump() + "\n", "bogus");
  expect_line(text.substr(0, second_break + 1), "declares 2 events");
  expect_line(text.substr(first_break + 1), "corpus line 1");
  expect_line("", "missing corpus header");
}

TEST(DecodedTree, JsonRoundTrip) {
  DecodedTree leaf{4, Eigen::Vector2d(0.25, -1), 0.5, {}};
  DecodedTree root{1, Eigen::Vector2d(1, 2), 0.9, {leaf, leaf}};
  const auto back = decoded_tree_from_json(decoded_tree_to_json(root));
  EXPECT_EQ(decoded_tree_to_json(back), decoded_tree_to_json(root));
  ASSERT_EQ(back.children.size(), 2u);
  EXPECT_EQ(back.children[1].attribute, leaf.attribute);
}

TEST(CollectionHeader, RoundTripWithQuantizer) {
  const auto space = testing::small_space(64, 1, 2);
  const std::vector<Eigen::VectorXd> xs{Eigen::Vector2d(1, 0), Eigen::Vector2d(0, 1)};
  const auto q = Quantizer::uniform(Eigen::Vector2d(1, 1).normalized(), -1, 1, 4);
  const auto cs = sketch_collection(space, 0, xs, {true, false, true, true}, q);
  const auto header = collection_header_to_json(cs);
  EXPECT_EQ(header["bucket_edges"].size(), 3u);
  const auto back = collection_from_json(header, cs.sketch);
  EXPECT_EQ(back.channels, cs.channels);
  ASSERT_TRUE(back.quantizer.has_value());
  EXPECT_EQ(back.quantizer->edges, q.edges);
  EXPECT_EQ(estimate_histogram(space, back), estimate_histogram(space, cs));

  auto broken = header;
  broken.erase("bucket_edges");
  broken.erase("direction");
  EXPECT_EQ(kind_of([&] { collection_from_json(broken, cs.sketch); }), ErrorKind::kFormat);
  EXPECT_EQ(kind_of([] { channels_from_json(Json::parse(R"(["moment3"])")); }), ErrorKind::kFormat);
}

TEST(Candidate, JsonRoundTrip) {
  const ConceptCandidate c{Eigen::Vector3d(0, 0.6, 0.8), {3, 9, 12}, 0.97};
  const auto back = candidate_from_json(candidate_to_json(c));
  EXPECT_EQ(back.centroid, c.centroid);
  EXPECT_EQ(back.members, c.members);
  EXPECT_EQ(back.cohesion, c.cohesion);
}

TEST(RunConfig, DefaultsRoundTrip) {
  RunConfig c;
  c.set_seed(42);
  const auto j = run_config_to_json(c);
  const auto back = run_config_from_json(j);
  EXPECT_EQ(run_config_to_json(back), j);
  EXPECT_EQ(back.sketch.global_seed, 42u);
  EXPECT_EQ(back.network.seed, 42u);
  EXPECT_EQ(back.lsh.seed, 42u);
  EXPECT_NO_THROW(back.validate());
}

TEST(RunConfig, PartialOverridesKeepDefaults) {
  const auto c = run_config_from_json(Json::parse(R"({"sketch": {"sketch_dim": 512}, "decode": {"k_max": 4}})"));
  EXPECT_EQ(c.sketch.sketch_dim, 512u);
  EXPECT_EQ(c.decode.params.k_max, 4u);
  EXPECT_EQ(c.decode.depth_limit, RunConfig{}.decode.depth_limit);
  EXPECT_EQ(c.network.modules, RunConfig{}.network.modules);
}

TEST(RunConfig, RejectsUnknownKeysBadTypesAndBadValues) {
  EXPECT_EQ(kind_of([] { run_config_from_json(Json::parse(R"({"sketchdim": 3})")); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { run_config_from_json(Json::parse(R"({"lsh": {"tables": "many"}})")); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { run_config_from_json(Json::parse(R"({"network": {"attributes": {"kind": "odd"}}})")); }),
            ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { run_config_from_json(Json::parse(R"({"stats": {"channels": ["nope"]}})")); }),
            ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { run_config_from_json(Json::parse(R"({"pool": {"rho": 1.5}})")).validate(); }),
            ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { run_config_from_json(Json::parse(R"({"sketch": {"sketch_dim": 0}})")).validate(); }),
            ErrorKind::kConfig);
}

TEST(RunConfig, LoadFromFile) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto good = dir / "sketchmem_cfg_good.json";
  const auto bad = dir / "sketchmem_cfg_bad.json";
  std::ofstream(good) << R"({"seed": 9, "corpus": {"n_events": 3}})";
  std::ofstream(bad) << "{ seed: ";
  EXPECT_EQ(load_run_config(good).corpus.n_events, 3u);
  EXPECT_EQ(load_run_config(good).sketch.global_seed, 9u);
  EXPECT_EQ(kind_of([&] { load_run_config(bad); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([&] { load_run_config(dir / "sketchmem_missing.json"); }), ErrorKind::kConfig);
  std::filesystem::remove(good);
  std::filesystem::remove(bad);
}

}  // namespace
}  // namespace sketchmem
