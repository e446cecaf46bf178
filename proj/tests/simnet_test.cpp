#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "support.hpp"

namespace sketchmem {
namespace {

using simnet::NetworkParams;

bool same_record(const ComputationRecord& a, const ComputationRecord& b) {
  if (a.roots != b.roots || a.nodes.size() != b.nodes.size()) return false;
  for (std::size_t i = 0; i < a.nodes.size(); ++i) {
    const auto &x = a.nodes[i], &y = b.nodes[i];
    if (x.node_id != y.node_id || x.module_id != y.module_id || x.children != y.children || x.output != y.output) {
      return false;
    }
  }
  return true;
}

TEST(Simnet, EventsAreDeterministicInSeeds) {
  NetworkParams p{32, 4, 3, 1, 3, 1, 4, {}, true, 5};
  const auto reg = simnet::gen_network(p);
  EXPECT_TRUE(same_record(simnet::gen_event(reg, p, 11), simnet::gen_event(reg, p, 11)));
  EXPECT_FALSE(same_record(simnet::gen_event(reg, p, 11), simnet::gen_event(reg, p, 12)));
  auto q = p;
  q.seed = 6;
  EXPECT_FALSE(same_record(simnet::gen_event(reg, p, 11), simnet::gen_event(reg, q, 11)));
}

TEST(Simnet, TenThousandEventsAreWellFormed) {
  NetworkParams p{24, 3, 3, 1, 3, 1, 4, {}, true, 1};
  const auto reg = simnet::gen_network(p);
  for (std::uint64_t s = 0; s < 10000; ++s) {
    const auto r = simnet::gen_event(reg, p, s);
    ASSERT_NO_THROW(r.validate(p.k_fired_max)) << s;
    ASSERT_GE(r.roots.size(), p.k_fired_min);
    ASSERT_LE(r.depth(), p.depth);
    std::set<ModuleId> root_modules;
    for (NodeId root : r.roots) root_modules.insert(r.node(root).module_id);
    ASSERT_EQ(root_modules.size(), r.roots.size()) << s;
    for (const auto& n : r.nodes) {
      ASSERT_NEAR(n.output.norm(), 1.0, 1e-12);
      ASSERT_EQ(static_cast<std::size_t>(n.output.size()), p.output_dim);
      std::set<ModuleId> kids;
      for (NodeId c : n.children) {
        const ModuleId m = r.node(c).module_id;
        ASSERT_NE(m, n.module_id) << s;
        ASSERT_TRUE(kids.insert(m).second) << s;
      }
    }
  }
}

TEST(Simnet, RootModulesUniform) {
  NetworkParams p{16, 2, 1, 2, 2, 4, 4, {}, false, 3};
  const auto reg = simnet::gen_network(p);
  std::map<ModuleId, int> counts;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    for (const auto& n : simnet::gen_event(reg, p, s).nodes) ++counts[n.module_id];
  }
  ASSERT_EQ(counts.size(), 16u);
  for (const auto& [m, c] : counts) EXPECT_NEAR(c, 250, 50) << m;
}

TEST(Simnet, KFiredCoversRange) {
  NetworkParams p{16, 2, 1, 2, 2, 1, 4, {}, false, 3};
  const auto reg = simnet::gen_network(p);
  std::map<std::size_t, int> counts;
  for (std::uint64_t s = 0; s < 2000; ++s) ++counts[simnet::gen_event(reg, p, s).roots.size()];
  ASSERT_EQ(counts.size(), 4u);
  for (const auto& [k, c] : counts) EXPECT_NEAR(c, 500, 100) << k;
}

TEST(Simnet, ClusteredAttributesStayNearPrototypes) {
  NetworkParams p{8, 16, 1, 2, 2, 1, 1, {simnet::AttributeKind::kClustered, 3, 0.1}, false, 2};
  for (ModuleId m = 0; m < 8; ++m) {
    const auto protos = simnet::module_prototypes(p, m, 16);
    ASSERT_EQ(protos.size(), 3u);
    Stream rng(m);
    for (int i = 0; i < 50; ++i) {
      const auto x = simnet::sample_attribute(p, m, 16, rng);
      std::vector<double> cos;
      for (const auto& proto : protos) cos.push_back(proto.dot(x));
      std::sort(cos.begin(), cos.end());
      EXPECT_GE(cos.back(), 0.8);
      EXPECT_LE(cos[1], 0.5);
    }
  }
}

TEST(Simnet, EntityRecurrenceIsBinomial) {
  NetworkParams p{32, 4, 1, 2, 2, 1, 3, {}, false, 4};
  const auto reg = simnet::gen_network(p);
  const auto roster = simnet::make_roster(reg, p, 5, 1);
  const double q = 0.1;
  const auto stream = simnet::gen_event_stream(reg, p, roster, 1000, q, 9);
  std::vector<int> hits(roster.size(), 0);
  for (const auto& ev : stream) {
    for (auto e : ev.entities) ++hits[e];
    for (auto e : ev.entities) {
      const auto& ent = roster[e];
      const bool present = std::any_of(ev.record.roots.begin(), ev.record.roots.end(), [&](NodeId r) {
        const auto& n = ev.record.node(r);
        return n.module_id == ent.module_id && n.output == ent.attribute;
      });
      EXPECT_TRUE(present);
    }
    EXPECT_NO_THROW(ev.record.validate(p.k_fired_max));
  }
  const double sigma = std::sqrt(1000 * q * (1 - q));
  for (int h : hits) EXPECT_NEAR(h, 100.0, 3 * sigma);
}

TEST(Simnet, RecurrenceExtremes) {
  NetworkParams p{32, 4, 2, 1, 2, 1, 3, {}, false, 4};
  const auto reg = simnet::gen_network(p);
  const auto roster = simnet::make_roster(reg, p, 3, 1);
  for (const auto& ev : simnet::gen_event_stream(reg, p, roster, 50, 0.0, 1)) EXPECT_TRUE(ev.entities.empty());
  for (const auto& ev : simnet::gen_event_stream(reg, p, roster, 50, 1.0, 1)) {
    EXPECT_EQ(ev.entities.size(), 3u);
    EXPECT_LE(ev.record.roots.size(), 3u);
  }
  EXPECT_THROW(simnet::gen_event_stream(reg, p, roster, 5, 1.5, 1), Error);
}

TEST(Simnet, InjectReplacesSameModuleRootAndPrunes) {
  ComputationRecord r;
  r.nodes = {{0, 1, Eigen::Vector2d(1, 0), {1}}, {1, 2, Eigen::Vector2d(0, 1), {}}, {2, 3, Eigen::Vector2d(1, 0), {}}};
  r.roots = {0, 2};
  simnet::inject_entity(r, {0, 1, Eigen::Vector2d(0.6, 0.8)}, 4);
  EXPECT_NO_THROW(r.validate());
  ASSERT_EQ(r.nodes.size(), 2u);
  ASSERT_EQ(r.roots.size(), 2u);
  EXPECT_EQ(r.node(r.roots[0]).module_id, 3u);
  EXPECT_EQ(r.node(r.roots[1]).output, Eigen::Vector2d(0.6, 0.8));

  simnet::inject_entity(r, {1, 7, Eigen::Vector2d(1, 0)}, 2);
  ASSERT_EQ(r.roots.size(), 2u);
  EXPECT_EQ(r.node(r.roots[0]).module_id, 1u);
  EXPECT_EQ(r.node(r.roots[1]).module_id, 7u);
}

TEST(Simnet, ParameterValidation) {
  EXPECT_THROW(simnet::gen_network(NetworkParams{4, 2, 1, 2, 2, 1, 5, {}, false, 0}), Error);
  EXPECT_THROW(simnet::gen_network(NetworkParams{4, 2, 2, 2, 4, 1, 2, {}, false, 0}), Error);
  EXPECT_THROW(simnet::gen_network(NetworkParams{4, 0, 1, 1, 1, 1, 1, {}, false, 0}), Error);
  EXPECT_NO_THROW(simnet::gen_network(NetworkParams{4, 2, 2, 1, 3, 1, 4, {}, false, 0}));
}

}  // namespace
}  // namespace sketchmem
