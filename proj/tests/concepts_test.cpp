#include <gtest/gtest.h>

#include "support.hpp"

namespace sketchmem {
namespace {

using testing::kind_of;

DecodedLayer layer_with(const Eigen::VectorXd& residual, double ratio) {
  DecodedLayer layer;
  layer.residual = Sketch(residual);
  layer.residual_ratio = ratio;
  return layer;
}

Eigen::VectorXd basis(Eigen::Index dim, Eigen::Index i) { return Eigen::VectorXd::Unit(dim, i); }

TEST(ResidualPool, AdmitsStrictlyAboveRho) {
  ResidualPool pool(0.3, 10);
  EXPECT_FALSE(pool.admit(0, layer_with(basis(4, 0), 0.3)));
  EXPECT_TRUE(pool.admit(1, layer_with(basis(4, 0) * 5.0, 0.31)));
  EXPECT_FALSE(pool.admit(2, layer_with(Eigen::VectorXd::Zero(4), 0.9)));
  ASSERT_EQ(pool.size(), 1u);
  EXPECT_EQ(pool.entries()[0].record_id, 1u);
  EXPECT_NEAR(pool.entries()[0].residual.norm(), 1.0, 1e-15);
  EXPECT_EQ(kind_of([] { ResidualPool(1.0); }), ErrorKind::kConfig);
  EXPECT_EQ(kind_of([] { ResidualPool(0.3, 0); }), ErrorKind::kConfig);
}

TEST(ResidualPool, LowerRhoAdmitsSuperset) {
  std::vector<double> ratios;
  Stream rng(4);
  for (int i = 0; i < 200; ++i) ratios.push_back(rng.uniform());
  std::size_t previous = 0;
  for (double rho : {0.9, 0.6, 0.3, 0.0}) {
    ResidualPool pool(rho, 1000);
    for (std::size_t i = 0; i < ratios.size(); ++i) pool_admit(pool, i, layer_with(basis(3, 1), ratios[i]));
    EXPECT_GE(pool.size(), previous);
    previous = pool.size();
  }
}

TEST(ResidualPool, EvictsOldestAtCapacity) {
  ResidualPool pool(0.0, 3);
  for (std::uint64_t i = 0; i < 5; ++i) pool.admit(i, layer_with(basis(3, 0), 0.5), static_cast<std::int64_t>(i));
  ASSERT_EQ(pool.size(), 3u);
  EXPECT_EQ(pool.entries().front().record_id, 2u);
  EXPECT_EQ(pool.entries().back().record_id, 4u);
}

TEST(ClusterPool, IdenticalResidualsFormOneCohesiveCandidate) {
  ResidualPool pool(0.1, 100);
  for (std::uint64_t i = 0; i < 10; ++i) pool.admit(i, layer_with(basis(8, 2) * (1.0 + i), 0.5));
  pool.admit(100, layer_with(basis(8, 5), 0.5));
  pool.admit(101, layer_with(basis(8, 6), 0.5));
  const auto cands = cluster_pool(pool, 0.7, 2);
  ASSERT_EQ(cands.size(), 1u);
  EXPECT_EQ(cands[0].members.size(), 10u);
  EXPECT_NEAR(cands[0].cohesion, 1.0, 1e-12);
  EXPECT_TRUE(cands[0].centroid.isApprox(basis(8, 2)));
}

TEST(ClusterPool, SeparatesDirectionsAndOrdersBySize) {
  ResidualPool pool(0.0, 100);
  Stream rng(2);
  std::uint64_t id = 0;
  for (int i = 0; i < 12; ++i) {
    const Eigen::Index dir = i % 3 == 0 ? 0 : 1;  // 4 near e0, 8 near e1
    Eigen::VectorXd v = basis(16, dir) + 0.05 * testing::unit(rng, 16);
    pool.admit(id++, layer_with(v, 0.5));
  }
  const auto cands = cluster_pool(pool, 0.8, 3);
  ASSERT_EQ(cands.size(), 2u);
  EXPECT_EQ(cands[0].members.size(), 8u);
  EXPECT_EQ(cands[1].members.size(), 4u);
  EXPECT_GT(cands[0].centroid[1], 0.99);
  EXPECT_GT(cands[1].centroid[0], 0.99);
  EXPECT_TRUE(cluster_pool(pool, 0.8, 9).empty());
}

TEST(ClusterPool, EmptyPoolAndArgumentChecks) {
  const ResidualPool pool;
  EXPECT_TRUE(cluster_pool(pool, 0.7, 5).empty());
  EXPECT_THROW(cluster_pool(pool, 0.0, 5), Error);
  EXPECT_THROW(cluster_pool(pool, 1.1, 5), Error);
  EXPECT_THROW(cluster_pool(pool, 0.7, 1), Error);
}

TEST(PromoteConcept, NewModuleExplainsTheResidual) {
  auto space = testing::small_space(256, 8, 4);
  Stream rng(9);
  const Eigen::VectorXd direction = testing::unit(rng, 256);
  const std::vector<ModuleOutput> known{{2, testing::unit(rng, 4)}};
  const Sketch y = sketch_layer(space, known) + Sketch(Eigen::VectorXd(0.8 * direction));

  const DecodeParams params{4, 1e-6, 0.0, 0.05};
  const auto before = block_omp_decode(space, y, params);
  EXPECT_GT(before.residual_ratio, 0.3);

  const ConceptCandidate cand{direction, {1, 2, 3}, 1.0};
  const ModuleId id = promote_concept(space.registry(), cand);
  EXPECT_EQ(id, 8u);
  EXPECT_EQ(space.registry().get(id).label, "concept");
  EXPECT_EQ(promote_concept(space.registry(), cand, "stripes"), 9u);

  const auto after = block_omp_decode(space, y, std::vector<ModuleId>{0, 1, 2, 3, 4, 5, 6, 7, 8}, params);
  EXPECT_LT(after.residual_ratio, 1e-9);
  const auto it = std::find_if(after.entries.begin(), after.entries.end(), [&](const auto& e) { return e.module_id == id; });
  ASSERT_NE(it, after.entries.end());
  EXPECT_NEAR(it->attribute[0], 0.8, 1e-9);
}

}  // namespace
}  // namespace sketchmem
