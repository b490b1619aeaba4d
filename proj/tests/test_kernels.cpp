#include <gtest/gtest.h>

#include <cmath>

#include "graphpy/kernels.hpp"
#include "graphpy/oracle.hpp"
#include "test_util.hpp"

using namespace graphpy;
using graphpy::testing::iota_column;
using graphpy::testing::random_symmetric_graph;
using graphpy::testing::random_tensor;
using graphpy::testing::t4;

namespace {

std::vector<double> vals(const Tensor& t) { return t.storage(); }

Tensor x1234() { return Tensor::column({1, 2, 3, 4}); }

UnifiedGraph self_loops(std::size_t n) {
  EdgeList e;
  for (std::size_t i = 0; i < n; ++i) e.add_edge(i, i);
  return build_graph(e, n, {.symmetrize = true, .need_edge_ids = true});
}

}  // namespace

TEST(GspmmV, T4SumMatchesDenseOracle) {
  auto g = t4();
  const auto want = oracle::dense_spmm(oracle::densify(g), x1234());
  EXPECT_EQ(vals(want), (std::vector<double>{5, 4, 7, 3}));
  EXPECT_EQ(gspmm_v(g, x1234()), want);
}

TEST(GspmmV, T4SumNormalized) {
  auto g = t4();
  auto out = gspmm_v(g, x1234(), ReduceOp::sum, true);
  EXPECT_DOUBLE_EQ(out[0], 2.5);
  EXPECT_DOUBLE_EQ(out[1], 2.0);
  EXPECT_DOUBLE_EQ(out[2], 7.0 / 3.0);
  EXPECT_DOUBLE_EQ(out[3], 3.0);
}

TEST(GspmmV, SelfLoopGraphIsIdentity) {
  auto g = self_loops(4);
  EXPECT_EQ(gspmm_v(g, x1234()), x1234());
}

TEST(GspmmV, MinMaxAndEmptyRows) {
  auto g = build_graph(t4_edges(), 5, {.symmetrize = true});
  auto x = Tensor::column({1, 2, 3, 4, 5});
  EXPECT_EQ(vals(gspmm_v(g, x, ReduceOp::max)), (std::vector<double>{3, 3, 4, 3, 0}));
  EXPECT_EQ(vals(gspmm_v(g, x, ReduceOp::min)), (std::vector<double>{2, 1, 1, 3, 0}));
  EXPECT_EQ(vals(gspmm_v(g, x, ReduceOp::sum)).back(), 0.0);
}

TEST(GspmmV, Errors) {
  auto g = t4();
  EXPECT_THROW(gspmm_v(g, Tensor::column({1, 2, 3})), Error);
  EXPECT_THROW(gspmm_v(g, x1234(), ReduceOp::max, true), Error);
}

TEST(NormInplace, DividesByClampedDegree) {
  auto g = t4();
  auto x = Tensor::column({2, 2, 3, 1});
  norm_by_degree_inplace(g, x);
  EXPECT_EQ(vals(x), (std::vector<double>{1, 1, 1, 1}));

  auto g5 = build_graph(t4_edges(), 5, {.symmetrize = true});
  auto y = Tensor::column({1, 1, 1, 1, 7});
  norm_by_degree_inplace(g5, y);
  EXPECT_EQ(y[4], 7.0);
}

TEST(NormInplace, TwiceEqualsDividingByDegreeSquared) {
  auto g = t4();
  auto x = Tensor::column({12, 12, 18, 5});
  norm_by_degree_inplace(g, x);
  norm_by_degree_inplace(g, x);
  const double d[] = {2, 2, 3, 1};
  const double orig[] = {12, 12, 18, 5};
  for (int i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(x[i], orig[i] / (d[i] * d[i]));
}

TEST(GspmmVe, UnitAndZeroWeights) {
  auto g = t4();
  EXPECT_EQ(gspmm_ve(g, Tensor({8, 1}, 1.0), x1234()), gspmm_v(g, x1234()));
  EXPECT_EQ(vals(gspmm_ve(g, Tensor({8, 1}, 0.0), x1234())), (std::vector<double>(4, 0.0)));
}

TEST(GspmmVe, SlotIndexWeightsMatchDenseOracle) {
  auto g = t4();
  const auto w = iota_column(8);
  const auto want = oracle::dense_spmm(oracle::densify(g, &w), x1234());
  // row0: 0*2 + 1*3; row1: 2*1 + 3*3; row2: 4*1 + 5*2 + 6*4; row3: 7*3
  EXPECT_EQ(vals(want), (std::vector<double>{3, 11, 38, 21}));
  EXPECT_EQ(gspmm_ve(g, w, x1234()), want);
}

TEST(GspmmVe, HeadMismatch) {
  auto g = t4();
  EXPECT_THROW(gspmm_ve(g, Tensor({8, 2}, 1.0), Tensor({4, 3}, 1.0)), Error);
  EXPECT_THROW(gspmm_ve(g, Tensor({8, 2}, 1.0), Tensor({4, 3, 2}, 1.0)), Error);
  EXPECT_THROW(gspmm_ve(g, Tensor({7, 1}, 1.0), x1234()), Error);
}

TEST(GspmmVeT, SlotIndexWeightsMatchDenseTranspose) {
  auto g = t4();
  const auto w = iota_column(8);
  const auto want = oracle::dense_spmm_t(oracle::densify(g, &w), x1234());
  EXPECT_EQ(vals(want), (std::vector<double>{16, 15, 35, 18}));
  EXPECT_EQ(gspmm_ve_t(g, w, x1234()), want);
}

TEST(GspmmVeT, SymmetricWeightsEqualForward) {
  auto g = t4();
  Tensor w({8, 1});
  for (index_t j = 0; j < 8; ++j) w[j] = static_cast<double>(std::min(j, g.csc_eid()[j]));
  EXPECT_EQ(gspmm_ve_t(g, w, x1234()), gspmm_ve(g, w, x1234()));
}

TEST(GspmmVeT, EqualsShuffleThenForwardBitwise) {
  std::mt19937_64 rng(3);
  auto g = t4();
  auto w = random_tensor({8, 2}, rng);
  auto x = random_tensor({4, 2, 3}, rng);
  EXPECT_EQ(gspmm_ve_t(g, w, x), gspmm_ve(g, e_shuffle(g, w), x));
}

TEST(GspmmVeT, RequiresEdgeIds) {
  auto g = t4(false);
  try {
    gspmm_ve_t(g, Tensor({8, 1}, 1.0), x1234());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_edge_ids);
  }
}

TEST(GspmmE, UnitWeightsGiveDegree) {
  auto g = t4();
  EXPECT_EQ(vals(gspmm_e(g, Tensor({8, 1}, 1.0))), (std::vector<double>{2, 2, 3, 1}));
}

TEST(GspmmE, MaxOverRowTwo) {
  auto g = t4();
  auto out = gspmm_e(g, iota_column(8), ReduceOp::max);
  EXPECT_EQ(out[2], 6.0);
  auto tr = gspmm_e(g, iota_column(8), ReduceOp::max, true);
  EXPECT_EQ(tr[2], 7.0);  // csc_eid of slots 4,5,6 = 1,3,7
}

TEST(GspmmE, EmptyRowIsZeroForEveryReduce) {
  auto g = build_graph(t4_edges(), 5, {.symmetrize = true, .need_edge_ids = true});
  auto w = Tensor({8, 1}, -3.0);
  for (auto r : {ReduceOp::sum, ReduceOp::min, ReduceOp::max}) EXPECT_EQ(gspmm_e(g, w, r)[4], 0.0);
}

TEST(GsddmmVv, OnesGiveFeatureLength) {
  auto g = t4();
  auto out = gsddmm_vv(g, Tensor({4, 3}, 1.0), Tensor({4, 3}, 1.0));
  EXPECT_EQ(vals(out), (std::vector<double>(8, 3.0)));
}

TEST(GsddmmVv, RowEndpointValues) {
  auto g = t4();
  auto out = gsddmm_vv(g, x1234(), Tensor({4, 1}, 1.0));
  EXPECT_EQ(vals(out), (std::vector<double>{1, 1, 2, 2, 3, 3, 3, 4}));
  EXPECT_EQ(out, oracle::dense_sddmm(g, x1234(), Tensor({4, 1}, 1.0)));
}

TEST(GsddmmVv, ChunkSizeDoesNotChangeOutput) {
  std::mt19937_64 rng(9);
  auto g = random_symmetric_graph(rng, 32);
  auto xr = random_tensor({g.vcount(), 2, 5}, rng);
  auto xc = random_tensor({g.vcount(), 2, 5}, rng);
  const auto ref = gsddmm_vv(g, xr, xc, 0, {.sddmm_chunk = 1});
  for (std::size_t c : {8u, 32u, 257u}) EXPECT_EQ(gsddmm_vv(g, xr, xc, 0, {.sddmm_chunk = c}), ref);
  EXPECT_THROW(gsddmm_vv(g, xr, xc, 0, {.sddmm_chunk = 0}), Error);
}

TEST(GsddmmVe, SubDivMul) {
  auto g = t4();
  auto w = iota_column(8);
  EXPECT_EQ(gsddmm_ve(g, Tensor({4, 1}, 0.0), w, SddmmOp::sub), w);

  auto deg = Tensor::column({2, 2, 3, 1});
  auto norm = gsddmm_ve(g, deg, w, SddmmOp::div, SddmmSide::row);
  for (index_t j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(norm[j], w[j] / deg[g.coo_rows()[j]]);

  auto gather = gsddmm_ve(g, x1234(), Tensor({8, 1}, 1.0), SddmmOp::mul, SddmmSide::col);
  EXPECT_EQ(vals(gather), (std::vector<double>{2, 3, 1, 3, 1, 2, 4, 3}));
  EXPECT_THROW(gsddmm_ve(g, Tensor({4, 2}, 1.0), w, SddmmOp::add), Error);
}

TEST(EShuffle, T4SlotIndexGivesEdgeIds) {
  auto g = t4();
  EXPECT_EQ(vals(e_shuffle(g, iota_column(8))), (std::vector<double>{2, 4, 0, 5, 1, 3, 7, 6}));
}

TEST(EShuffle, InvolutionAndIdentityPairing) {
  std::mt19937_64 rng(4);
  auto g = t4();
  auto w = random_tensor({8, 3}, rng);
  EXPECT_EQ(e_shuffle(g, e_shuffle(g, w)), w);
  auto loops = self_loops(3);
  auto wl = random_tensor({3, 1}, rng);
  EXPECT_EQ(e_shuffle(loops, wl), wl);
}

TEST(EShuffle, RecordsShuffleIntermediate) {
  MemoryLedger ledger;
  auto g = t4();
  e_shuffle(g, iota_column(8), {.ledger = &ledger});
  EXPECT_EQ(ledger.snapshot().current[MemCategory::shuffle_intermediate], 8);
}

TEST(EdgeSoftmax, EqualLogitsAreUniform) {
  auto g = t4();
  auto out = edge_softmax(g, Tensor({8, 1}, 0.7));
  for (index_t j = 0; j < 8; ++j) EXPECT_DOUBLE_EQ(out[j], 1.0 / static_cast<double>(g.deg()[g.coo_rows()[j]]));
}

TEST(EdgeSoftmax, DominantSlotSaturates) {
  auto g = t4();
  Tensor l({8, 1}, 0.0);
  l[4] = 1e3;
  auto out = edge_softmax(g, l);
  EXPECT_NEAR(out[4], 1.0, 1e-12);
  EXPECT_NEAR(out[5], 0.0, 1e-12);
  EXPECT_NEAR(out[6], 0.0, 1e-12);
}

TEST(EdgeSoftmax, RowsSumToOneAndShiftInvariant) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_symmetric_graph(rng);
    auto l = random_tensor({g.ecount(), 2}, rng, -5, 5);
    auto s = edge_softmax(g, l);
    auto sums = gspmm_e(g, s);
    for (index_t r = 0; r < g.vcount(); ++r)
      if (g.deg()[r] > 0) {
        for (int h = 0; h < 2; ++h) EXPECT_NEAR(sums(r, h), 1.0, 1e-12);
      }
    auto shift = random_tensor({g.vcount(), 2}, rng, -10, 10);
    auto shifted = edge_softmax(g, gsddmm_ve(g, shift, l, SddmmOp::add, SddmmSide::row));
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_NEAR(shifted[i], s[i], 1e-12);
  }
}

TEST(Kernels, FloatTensorsSupported) {
  auto g = t4();
  TensorF x({4, 1}, std::vector<float>{1, 2, 3, 4});
  auto out = gspmm_v(g, x, ReduceOp::sum, true);
  EXPECT_NEAR(out[2], 7.0f / 3.0f, 1e-4);
  TensorF w({8, 1}, 1.0f);
  EXPECT_EQ(gspmm_ve_t(g, w, x), gspmm_v(g, x));
}

TEST(Kernels, TimerAccumulatesOnlyOutermostScope) {
  KernelClock clock;
  auto g = t4();
  edge_softmax(g, Tensor({8, 1}, 0.0), {.clock = &clock});
  EXPECT_GT(clock.kernel_ns(), 0);
}

TEST(Kernels, RandomGraphsMatchDenseOracle) {
  std::mt19937_64 rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    auto g = random_symmetric_graph(rng);
    if (g.ecount() == 0) continue;
    const std::size_t H = 1 + trial % 3, F = 1 + trial % 4;
    auto x = random_tensor({g.vcount(), H * F}, rng);
    auto xh = x.reshaped({g.vcount(), H, F});
    auto w = random_tensor({g.ecount(), H}, rng);
    auto xv = random_tensor({g.vcount(), H}, rng);
    auto near = [](const Tensor& a, const Tensor& b) { return oracle::check_close(a, b, 1e-12, 1e-12).pass; };

    for (int r = 0; r < 3; ++r) {
      EXPECT_TRUE(near(gspmm_v(g, x, static_cast<ReduceOp>(r)), oracle::dense_gspmm_v(g, x, r, false)));
      EXPECT_TRUE(near(gspmm_e(g, w, static_cast<ReduceOp>(r)), oracle::dense_gspmm_e(g, w, r, false)));
      EXPECT_TRUE(near(gspmm_e(g, w, static_cast<ReduceOp>(r), true), oracle::dense_gspmm_e(g, w, r, true)));
    }
    EXPECT_TRUE(near(gspmm_v(g, x, ReduceOp::sum, true), oracle::dense_gspmm_v(g, x, 0, true)));
    EXPECT_TRUE(near(gspmm_ve(g, w, xh), oracle::dense_gspmm_ve(g, w, xh)));
    EXPECT_TRUE(near(gspmm_ve_t(g, w, xh), oracle::dense_gspmm_ve_t(g, w, xh)));
    EXPECT_TRUE(near(gsddmm_vv(g, xh, xh), oracle::dense_sddmm(g, xh, xh, H)));
    for (int op = 0; op < 4; ++op)
      for (bool col : {false, true}) {
        auto side = col ? SddmmSide::col : SddmmSide::row;
        auto xs = op == 3 ? random_tensor({g.vcount(), H}, rng, 0.5, 2.0) : xv;
        EXPECT_TRUE(near(gsddmm_ve(g, xs, w, static_cast<SddmmOp>(op), side),
                         oracle::dense_gsddmm_ve(g, xs, w, op, col)));
      }
    EXPECT_TRUE(near(e_shuffle(g, w), oracle::dense_e_shuffle(g, w)));
    EXPECT_TRUE(near(edge_softmax(g, w), oracle::dense_edge_softmax(g, w)));
  }
}
