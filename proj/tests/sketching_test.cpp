#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

namespace sketchmem {
namespace {

using testing::small_space;

// Independent restatement of the recursive sketch, built straight from
// derive_matrix with no cache, memo, or SketchSpace involved.
Eigen::VectorXd oracle_node(const SketchConfig& c, const ComputationRecord& r, NodeId id) {
  const auto& node = r.node(id);
  const auto d = c.sketch_dim;
  Eigen::VectorXd own =
      derive_matrix(c.global_seed, node.module_id, MatrixRole::kAttr, d, static_cast<std::size_t>(node.output.size())) *
      node.output;
  if (node.children.empty()) return own;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(d));
  for (NodeId ch : node.children) sum += oracle_node(c, r, ch);
  sum /= std::sqrt(static_cast<double>(node.children.size()));
  return c.attr_weight * own + c.rec_weight * (derive_matrix(c.global_seed, node.module_id, MatrixRole::kRec, d, d) * sum);
}

ComputationRecord two_level() {
  Stream rng(3);
  ComputationRecord r;
  r.nodes = {{0, 2, testing::unit(rng, 4), {1, 2}},
             {1, 5, testing::unit(rng, 4), {}},
             {2, 6, testing::unit(rng, 4), {3}},
             {3, 1, testing::unit(rng, 4), {}},
             {4, 7, testing::unit(rng, 4), {}}};
  r.roots = {0, 4};
  return r;
}

TEST(SketchLayer, IsSumOfEmbeddings) {
  const auto space = small_space(128, 8, 4);
  Stream rng(1);
  const ModuleOutput a{1, testing::unit(rng, 4)}, b{6, testing::unit(rng, 4)};
  const std::vector<ModuleOutput> both{a, b};
  const Eigen::VectorXd expected = derive_matrix(7, 1, MatrixRole::kAttr, 128, 4) * a.second +
                                   derive_matrix(7, 6, MatrixRole::kAttr, 128, 4) * b.second;
  EXPECT_TRUE(sketch_layer(space, both).values().isApprox(expected, 1e-12));
}

TEST(SketchLayer, RejectsDuplicatesAndWrongDimensions) {
  const auto space = small_space(64, 4, 3);
  const std::vector<ModuleOutput> dup{{1, Eigen::VectorXd::Ones(3)}, {1, Eigen::VectorXd::Ones(3)}};
  EXPECT_THROW(sketch_layer(space, dup), Error);
  const std::vector<ModuleOutput> wrong{{1, Eigen::VectorXd::Ones(5)}};
  EXPECT_THROW(sketch_layer(space, wrong), Error);
  const std::vector<ModuleOutput> unknown{{99, Eigen::VectorXd::Ones(3)}};
  EXPECT_THROW(sketch_layer(space, unknown), Error);
}

TEST(SketchLayer, EmptyLayerIsZero) {
  const auto space = small_space(32, 4, 3);
  EXPECT_EQ(sketch_layer(space, {}).norm(), 0.0);
}

TEST(SketchNode, MatchesOracle) {
  const auto space = small_space(96, 8, 4);
  const auto record = two_level();
  for (NodeId id : {0u, 2u, 3u}) {
    EXPECT_TRUE(sketch_node(space, record, id).values().isApprox(oracle_node(space.config(), record, id), 1e-12));
  }
}

TEST(SketchEvent, RootsAveragedBySqrtCount) {
  const auto space = small_space(96, 8, 4);
  const auto record = two_level();
  const Eigen::VectorXd expected =
      (oracle_node(space.config(), record, 0) + oracle_node(space.config(), record, 4)) / std::sqrt(2.0);
  EXPECT_TRUE(sketch_event(space, record).values().isApprox(expected, 1e-12));
}

TEST(SketchEvent, SingleLeafIsItsEmbedding) {
  const auto space = small_space(64, 4, 2);
  ComputationRecord r;
  r.nodes = {{0, 3, Eigen::Vector2d(0.6, 0.8), {}}};
  r.roots = {0};
  EXPECT_TRUE(sketch_event(space, r).values().isApprox(embed_values(space, 3, Eigen::Vector2d(0.6, 0.8))));
}

TEST(SketchEvent, NormPreservedInExpectation) {
  // Unit attributes, Gaussian embeddings: E||s||^2 = 1 at every level.
  const auto space = small_space(512, 16, 8);
  simnet::NetworkParams net{16, 8, 3, 2, 2, 2, 2, {}, false, 1};
  double total = 0;
  const int n = 60;
  for (int t = 0; t < n; ++t) total += sketch_event(space, simnet::gen_event(space.registry(), net, t)).norm();
  EXPECT_NEAR(total / n, 1.0, 0.1);
}

TEST(SketchEvent, SharedNodeContributesThroughEachParent) {
  const auto space = small_space(64, 8, 2);
  ComputationRecord r;
  r.nodes = {{0, 1, Eigen::Vector2d(1, 0), {2}}, {1, 3, Eigen::Vector2d(0, 1), {2}}, {2, 5, Eigen::Vector2d(1, 1), {}}};
  r.roots = {0, 1};
  const Eigen::VectorXd expected =
      (oracle_node(space.config(), r, 0) + oracle_node(space.config(), r, 1)) / std::sqrt(2.0);
  EXPECT_TRUE(sketch_event(space, r).values().isApprox(expected, 1e-12));
}

TEST(SketchEvent, RejectsEmptyAndInvalidRecords) {
  const auto space = small_space(32, 4, 2);
  EXPECT_THROW(sketch_event(space, ComputationRecord{}), Error);
  ComputationRecord cyc;
  cyc.nodes = {{0, 1, Eigen::Vector2d(1, 0), {1}}, {1, 2, Eigen::Vector2d(0, 1), {0}}};
  cyc.roots = {0};
  EXPECT_THROW(sketch_event(space, cyc), Error);
}

TEST(Record, Validation) {
  auto r = two_level();
  EXPECT_NO_THROW(r.validate());
  EXPECT_NO_THROW(r.validate(2));
  EXPECT_THROW(r.validate(1), Error);
  EXPECT_EQ(r.depth(), 3u);
  auto missing = r;
  missing.nodes[0].children.push_back(42);
  EXPECT_THROW(missing.validate(), Error);
  auto dup = r;
  dup.nodes[1].node_id = 0;
  EXPECT_THROW(dup.validate(), Error);
  auto self_loop = r;
  self_loop.nodes[3].children.push_back(3);
  EXPECT_THROW(self_loop.validate(), Error);
}

TEST(Registry, AtomModulesTakeNextIdAndOverrideDerivation) {
  auto space = small_space(16, 3, 4);
  Eigen::VectorXd atom = Eigen::VectorXd::Zero(16);
  atom[2] = 3.0;
  const ModuleId id = space.registry().add_atom_module(atom, "tiger");
  EXPECT_EQ(id, 3u);
  EXPECT_EQ(space.registry().get(id).label, "tiger");
  EXPECT_EQ(space.output_dim(id), 1u);
  const auto r = space.attr(id);
  ASSERT_EQ(r->cols(), 1);
  EXPECT_DOUBLE_EQ((*r)(2, 0), 1.0);
  EXPECT_THROW(space.registry().add_atom_module(Eigen::VectorXd::Zero(16), "zero"), Error);
  EXPECT_THROW(space.registry().add({1, 4, "dup"}), Error);
}

}  // namespace
}  // namespace sketchmem
