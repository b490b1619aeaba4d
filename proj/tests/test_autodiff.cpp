#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "graphpy/autodiff.hpp"
#include "graphpy/oracle.hpp"
#include "graphpy/oracle_backend.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

using namespace graphpy;
using namespace graphpy::testing;

namespace {

constexpr double kGradTol = 1e-6;

// Keeps values away from the kinks of relu-like ops.
Tensor away_from_zero(Tensor x) {
  for (auto& v : x.values())
    if (std::abs(v) < 0.1) v = v < 0 ? -0.1 - v : 0.1 + v;
  return x;
}

}  // namespace

TEST(DenseOps, ReluForwardAndGrad) {
  Tape t;
  auto x = t.input(Tensor::column({-1, 2, 0, 3}));
  auto y = relu(x);
  EXPECT_EQ(y.value().storage(), (std::vector<double>{0, 2, 0, 3}));
  backward(weighted_sum(y, Tensor({4, 1}, 1.0)));
  EXPECT_EQ(x.grad()->storage(), (std::vector<double>{0, 1, 0, 1}));
}

TEST(DenseOps, DropoutZeroIsIdentity) {
  Tape t;
  auto xv = Tensor::column({1, 2, 3});
  auto x = t.input(xv);
  auto y = dropout(x, 0.0, 5, true);
  EXPECT_EQ(y.value(), xv);
  auto z = dropout(x, 0.5, 5, false);
  EXPECT_EQ(z.value(), xv);
}

TEST(DenseOps, DropoutIsSeededAndScaled) {
  Tape a, b;
  auto x = Tensor({200, 1}, 1.0);
  auto ya = dropout(a.input(x), 0.5, 11, true).value();
  auto yb = dropout(b.input(x), 0.5, 11, true).value();
  EXPECT_EQ(ya, yb);
  int kept = 0;
  for (double v : ya.values()) {
    EXPECT_TRUE(v == 0.0 || v == 2.0);
    kept += v != 0.0;
  }
  EXPECT_GT(kept, 60);
  EXPECT_LT(kept, 140);
}

TEST(DenseOps, MatmulHandValues) {
  Tape t;
  auto A = t.input(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto B = t.input(Tensor::matrix(2, 1, {5, 6}));
  EXPECT_EQ(matmul(A, B).value().storage(), (std::vector<double>{17, 39}));
}

TEST(GradCheck, DenseOps) {
  std::mt19937_64 rng(5);
  auto A = random_tensor({5, 3}, rng), B = random_tensor({3, 4}, rng), b = random_tensor({4}, rng);
  EXPECT_LT(grad_error({A, B}, [](Tape&, auto& v) { return matmul(v[0], v[1]); }), kGradTol);
  auto C = random_tensor({5, 4}, rng);
  EXPECT_LT(grad_error({C, b}, [](Tape&, auto& v) { return bias_add(v[0], v[1]); }), kGradTol);
  EXPECT_LT(grad_error({C, C}, [](Tape&, auto& v) { return add(v[0], v[1]); }), kGradTol);
  auto K = away_from_zero(random_tensor({6, 3}, rng));
  EXPECT_LT(grad_error({K}, [](Tape&, auto& v) { return relu(v[0]); }), kGradTol);
  EXPECT_LT(grad_error({K}, [](Tape&, auto& v) { return leaky_relu(v[0], 0.2); }), kGradTol);
  EXPECT_LT(grad_error({K}, [](Tape&, auto& v) { return elu(v[0]); }), kGradTol);
  EXPECT_LT(grad_error({K}, [](Tape&, auto& v) { return dropout(v[0], 0.4, 3, true); }), kGradTol);
  EXPECT_LT(grad_error({K}, [](Tape&, auto& v) { return fused_relu_dropout(v[0], 0.4, 3); }), kGradTol);
  auto eps = Tensor({1}, 0.3);
  EXPECT_LT(grad_error({K, eps}, [](Tape&, auto& v) { return scale1p(v[0], v[1]); }), kGradTol);
  auto Z = random_tensor({5, 6}, rng), a = random_tensor({2, 3}, rng);
  EXPECT_LT(grad_error({Z, a}, [](Tape&, auto& v) { return head_dot(v[0], v[1]); }), kGradTol);
}

TEST(GradCheck, LogSoftmaxNll) {
  std::mt19937_64 rng(8);
  auto X = random_tensor({6, 3}, rng, -2, 2);
  std::vector<std::int64_t> labels{0, 2, 1, 1, 0, 2};
  std::vector<bool> mask{true, false, true, true, false, true};
  auto f = [&](Tape&, auto& v) { return log_softmax_nll(v[0], labels, mask); };
  EXPECT_LT(grad_error({X}, f), kGradTol);
  Tape t;
  auto x = t.input(X);
  auto loss = log_softmax_nll(x, labels, mask);
  backward(loss);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_EQ((*x.grad())(1, c), 0.0);
}

TEST(GradCheck, GraphOpsOnRandomGraphs) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 8; ++trial) {
    auto g = random_symmetric_graph(rng, 12);
    if (g.ecount() == 0) continue;
    const std::size_t V = g.vcount(), E = g.ecount(), H = 1 + trial % 2, F = 2;
    auto X = random_tensor({V, H * F}, rng);
    auto W = random_tensor({E, H}, rng);
    auto Xv = random_tensor({V, H}, rng, 0.5, 2.0);
    for (bool norm : {false, true})
      EXPECT_LT(grad_error({X}, [&](Tape&, auto& v) { return spmm_v_node(g, v[0], norm); }), kGradTol);
    EXPECT_LT(grad_error({W, X}, [&](Tape&, auto& v) { return spmm_ve_node(g, v[0], v[1]); }), kGradTol);
    for (auto op : {SddmmOp::add, SddmmOp::sub, SddmmOp::mul, SddmmOp::div})
      for (auto side : {SddmmSide::row, SddmmSide::col})
        EXPECT_LT(grad_error({Xv, W}, [&](Tape&, auto& v) { return gsddmm_ve_node(g, v[0], v[1], op, side); }),
                  kGradTol);
    EXPECT_LT(grad_error({W}, [&](Tape&, auto& v) { return edge_softmax_node(g, v[0]); }), kGradTol);
  }
}

TEST(GradCheck, EmulatedLayoutAndOracleBackendAgree) {
  std::mt19937_64 rng(17);
  auto g = random_symmetric_graph(rng, 16);
  auto X = random_tensor({g.vcount(), 3}, rng);
  auto W = random_tensor({g.ecount(), 1}, rng);
  MemoryLedger ledger;
  oracle::DenseOracleBackend dense;
  const TapeOptions variants[] = {
      {},
      {.ctx = {.ledger = &ledger}, .layout = LayoutMode::dgl_emulation},
      {.backend = &dense},
  };
  std::vector<std::vector<Tensor>> grads;
  for (const auto& opts : variants) {
    Builder f = [&](Tape&, auto& v) { return spmm_ve_node(g, v[0], spmm_v_node(g, v[1], true)); };
    EXPECT_LT(grad_error({W, X}, f, 2, opts), kGradTol);
    grads.push_back(analytic({W, X}, f, Tensor({g.vcount(), 3}, 1.0), opts));
  }
  for (std::size_t k = 1; k < grads.size(); ++k)
    for (std::size_t i = 0; i < 2; ++i) EXPECT_TRUE(oracle::check_close(grads[k][i], grads[0][i], 1e-12, 1e-12).pass);
  for (auto c : kAllMemCategories) EXPECT_EQ(ledger.snapshot().current[c], 0) << to_string(c);
}

TEST(Tape, ChainAndDiamond) {
  Tape t;
  auto x = t.input(Tensor::column({2.0}));
  // y = relu(x) + x  ->  dy/dx = 2
  auto y = add(relu(x), x);
  backward(weighted_sum(y, Tensor({1, 1}, 1.0)));
  EXPECT_EQ((*x.grad())[0], 2.0);
}

TEST(Tape, ReplayIsReverseOfForward) {
  Tape t;
  auto x = t.input(Tensor::column({1.0, -1.0}));
  auto a = relu(x);
  auto b = elu(a);
  auto c = leaky_relu(b, 0.1);
  auto loss = weighted_sum(c, Tensor({2, 1}, 1.0));
  backward(loss);
  EXPECT_EQ(t.replay_order(), (std::vector<NodeId>{loss.node_id(), c.node_id(), b.node_id(), a.node_id()}));
}

TEST(Tape, BackwardTwiceAndNonScalar) {
  Tape t;
  auto x = t.input(Tensor::column({1.0, 2.0}));
  auto y = relu(x);
  try {
    backward(y);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::non_scalar_loss);
  }
  auto loss = weighted_sum(y, Tensor({2, 1}, 1.0));
  backward(loss);
  try {
    backward(loss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::backward_twice);
  }
}

TEST(Tape, LedgerReturnsToZero) {
  MemoryLedger ledger;
  auto g = t4();
  {
    Tape t({.ctx = {.ledger = &ledger}});
    auto x = t.input(Tensor({4, 2}, 1.0));
    auto w = t.input(Tensor({8, 1}, 0.5));
    auto y = spmm_ve_node(g, w, x);
    EXPECT_EQ(ledger.snapshot().current[MemCategory::state_tensor], 16);
    EXPECT_EQ(ledger.snapshot().current[MemCategory::activation], 8);
    backward(weighted_sum(y, Tensor({4, 2}, 1.0)));
  }
  for (auto c : kAllMemCategories) EXPECT_EQ(ledger.snapshot().current[c], 0);
}

TEST(Pitfalls, SkippedStateMakesBackwardFail) {
  Tape t({.pitfalls = {.skip_state_tensors = true}});
  auto A = t.input(Tensor::matrix(2, 2, {1, 2, 3, 4}));
  auto y = matmul(A, A);
  auto loss = weighted_sum(y, Tensor({2, 2}, 1.0));
  try {
    backward(loss);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::state_tensor_missing);
  }
}

TEST(Pitfalls, UntransposedBackwardIsWrongOnAsymmetricWeights) {
  auto g = t4();
  const auto W = iota_column(8);
  const auto X = Tensor::column({1, 2, 3, 4});
  Builder f = [&](Tape&, auto& v) { return spmm_ve_node(g, v[0], v[1]); };
  const Tensor R({4, 1}, 1.0);
  auto good = analytic({W, X}, f, R, {});
  auto bad = analytic({W, X}, f, R, {.pitfalls = {.untransposed_backward = true}});
  // dX = A_w^T * 1 = column sums of the weighted matrix
  EXPECT_EQ(good[1].storage(), (std::vector<double>{6, 5, 11, 6}));
  EXPECT_EQ(bad[1].storage(), (std::vector<double>{1, 5, 15, 7}));
  EXPECT_GT(oracle::relative_error(bad[1], good[1]), 0.1);
  // symmetric weights hide the bug
  Tensor ws({8, 1});
  for (index_t j = 0; j < 8; ++j) ws[j] = static_cast<double>(std::min(j, g.csc_eid()[j]));
  EXPECT_EQ(analytic({ws, X}, f, R, {})[1], analytic({ws, X}, f, R, {.pitfalls = {.untransposed_backward = true}})[1]);
}

TEST(Pitfalls, NormalizeAfterBackwardDependsOnDegreeSpread) {
  Builder f;
  const auto X = Tensor::column({1, 2, 3, 4});
  const Tensor R = Tensor::column({1, -1, 2, 0.5});
  auto g = t4();
  f = [&](Tape&, auto& v) { return spmm_v_node(g, v[0], true); };
  auto good = analytic({X}, f, R, {});
  auto bad = analytic({X}, f, R, {.pitfalls = {.normalize_after_backward = true}});
  EXPECT_GT(oracle::relative_error(bad[0], good[0]), 0.1);

  auto ring = build_graph(ring_edges(6), 6, {.symmetrize = true});
  auto X6 = Tensor::column({1, 2, 3, 4, 5, 6});
  auto R6 = Tensor::column({1, -1, 2, 0.5, 3, 0});
  Builder fr = [&](Tape&, auto& v) { return spmm_v_node(ring, v[0], true); };
  EXPECT_EQ(analytic({X6}, fr, R6, {})[0], analytic({X6}, fr, R6, {.pitfalls = {.normalize_after_backward = true}})[0]);
}

TEST(Optimizer, SgdStep) {
  Parameter p("w", Tensor::column({1.0, 2.0}));
  p.grad = Tensor::column({0.5, -1.0});
  Optimizer opt(OptimizerKind::sgd, 0.1);
  step(opt, {&p});
  EXPECT_DOUBLE_EQ(p.value[0], 0.95);
  EXPECT_DOUBLE_EQ(p.value[1], 2.1);
}

TEST(Optimizer, AdamFirstStepMovesByLearningRate) {
  Parameter p("w", Tensor::column({1.0, 2.0, 3.0}));
  p.grad = Tensor::column({0.5, -4.0, 1e-3});
  Optimizer opt(OptimizerKind::adam, 0.01);
  step(opt, {&p});
  EXPECT_NEAR(p.value[0], 0.99, 1e-7);
  EXPECT_NEAR(p.value[1], 2.01, 1e-7);
  EXPECT_NEAR(p.value[2], 2.99, 1e-4);
}

TEST(Optimizer, ZeroGradAndMissingGrad) {
  Parameter p("w", Tensor::column({1.0}));
  Optimizer opt(OptimizerKind::sgd, 0.1);
  try {
    step(opt, {&p});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_grad);
  }
  zero_grad({&p});
  ASSERT_TRUE(p.grad.has_value());
  EXPECT_EQ((*p.grad)[0], 0.0);
}

TEST(Optimizer, ParamGradsAccumulateAcrossUses) {
  Parameter p("w", Tensor::column({3.0}));
  Tape t;
  auto w = t.param(p);
  auto y = add(w, w);
  backward(weighted_sum(y, Tensor({1, 1}, 1.0)));
  ASSERT_TRUE(p.grad.has_value());
  EXPECT_EQ((*p.grad)[0], 2.0);
}

TEST(CounterUniform, RangeAndDeterminism) {
  for (std::uint64_t i = 0; i < 1000; ++i) {
    const double u = counter_uniform(1, 2, i);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
    EXPECT_EQ(u, counter_uniform(1, 2, i));
  }
  EXPECT_NE(counter_uniform(1, 2, 3), counter_uniform(1, 3, 3));
}
