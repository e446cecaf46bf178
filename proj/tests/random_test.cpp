#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "sketchmem/random.hpp"
#include "sketchmem/registry.hpp"

namespace sketchmem {
namespace {

// Known-answer vectors published with the reference Philox implementation.
TEST(Philox, KnownAnswers) {
  EXPECT_EQ(philox4x32({0, 0, 0, 0}, 0), (PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
  EXPECT_EQ(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, 0xffffffffffffffffull),
            (PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
  EXPECT_EQ(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, (0x299f31d0ull << 32) | 0xa4093822ull),
            (PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Stream, SameKeySameSequence) {
  Stream a = Stream::derive(3, "x", 1);
  Stream b = Stream::derive(3, "x", 1);
  for (int i = 0; i < 100; ++i) ASSERT_EQ(a.next_u64(), b.next_u64());
}

TEST(Stream, NamesAndIndicesSeparateStreams) {
  std::set<std::uint64_t> firsts;
  for (const char* name : {"a", "b", "c"}) {
    for (std::uint64_t i = 0; i < 10; ++i) firsts.insert(Stream::derive(1, name, i).next_u64());
  }
  EXPECT_EQ(firsts.size(), 30u);
}

TEST(Stream, BelowStaysInRangeAndCoversIt) {
  Stream s(11);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 70000; ++i) {
    const auto v = s.below(7);
    ASSERT_LT(v, 7u);
    ++counts[v];
  }
  for (int c : counts) EXPECT_NEAR(c, 10000, 500);
}

TEST(Stream, NormalMoments) {
  Stream s(5);
  double sum = 0, sq = 0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double x = s.normal();
    sum += x;
    sq += x * x;
  }
  EXPECT_NEAR(sum / n, 0.0, 0.01);
  EXPECT_NEAR(sq / n, 1.0, 0.01);
}

TEST(DeriveMatrix, EntriesHaveVarianceOneOverRows) {
  const auto m = derive_matrix(1, 2, MatrixRole::kAttr, 512, 64);
  const double mean = m.mean();
  const double var = (m.array() - mean).square().mean();
  EXPECT_NEAR(mean, 0.0, 3.0 / std::sqrt(512.0 * 64.0) / std::sqrt(512.0));
  EXPECT_NEAR(var * 512.0, 1.0, 0.03);
}

TEST(DeriveMatrix, BlocksAreAddressable) {
  // Fewer columns or rows yields the corresponding sub-block of the larger matrix.
  const auto big = derive_matrix(9, 4, MatrixRole::kRec, 64, 16);
  const auto narrow = derive_matrix(9, 4, MatrixRole::kRec, 64, 5);
  EXPECT_EQ(narrow, big.leftCols(5));
}

TEST(DeriveMatrix, RolesAndIdsAreIndependent) {
  const auto a = derive_matrix(1, 0, MatrixRole::kAttr, 128, 4);
  const auto b = derive_matrix(1, 0, MatrixRole::kRec, 128, 4);
  const auto c = derive_matrix(1, 1, MatrixRole::kAttr, 128, 4);
  const auto d = derive_matrix(2, 0, MatrixRole::kAttr, 128, 4);
  for (const auto* other : {&b, &c, &d}) {
    const double cos = a.col(0).dot(other->col(0)) / (a.col(0).norm() * other->col(0).norm());
    EXPECT_LT(std::abs(cos), 0.4);
  }
}

TEST(MatrixCache, ReturnsSharedInstanceAndEvictsOverBudget) {
  MatrixCache cache(3 * 64 * 64 * sizeof(double));
  const auto first = cache.get(1, 0, MatrixRole::kRec, 64, 64);
  EXPECT_EQ(first.get(), cache.get(1, 0, MatrixRole::kRec, 64, 64).get());
  for (std::uint64_t id = 1; id < 5; ++id) (void)cache.get(1, id, MatrixRole::kRec, 64, 64);
  const auto again = cache.get(1, 0, MatrixRole::kRec, 64, 64);
  EXPECT_NE(first.get(), again.get());
  EXPECT_EQ(*first, *again);
}

}  // namespace
}  // namespace sketchmem
