#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "graphpy/models.hpp"
#include "graphpy/oracle.hpp"
#include "graphpy/oracle_backend.hpp"
#include "grad_check.hpp"
#include "test_util.hpp"

using namespace graphpy;
using graphpy::testing::layer_grad_error;
using graphpy::testing::random_symmetric_graph;
using graphpy::testing::random_tensor;
using graphpy::testing::t4;

namespace {

// Plain dense linear algebra, independent of the tape.
Tensor mm(const Tensor& A, const Tensor& B) {
  Tensor C({A.rows(), B.row_size()}, 0.0);
  for (std::size_t i = 0; i < A.rows(); ++i)
    for (std::size_t k = 0; k < A.row_size(); ++k)
      for (std::size_t j = 0; j < B.row_size(); ++j) C(i, j) += A(i, k) * B(k, j);
  return C;
}

void add_bias(Tensor& X, const Tensor& b) {
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.row_size(); ++j) X(i, j) += b[j];
}

Tensor dense_gcn(const UnifiedGraph& g, const Tensor& h, const Tensor& W, const Tensor& b) {
  const auto M = oracle::densify(g);
  Tensor out = oracle::dense_spmm(M, mm(h, W));
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double d = 0;
    for (std::size_t c = 0; c < M.n; ++c) d += M(r, c);
    d = std::max(d, 1.0);
    for (std::size_t j = 0; j < out.row_size(); ++j) out(r, j) /= d;
  }
  add_bias(out, b);
  return out;
}

Tensor dense_gin(const UnifiedGraph& g, const Tensor& h, double eps, const Tensor& W1, const Tensor& b1,
                 const Tensor& W2, const Tensor& b2) {
  Tensor agg = oracle::dense_spmm(oracle::densify(g), h);
  for (std::size_t i = 0; i < agg.size(); ++i) agg[i] += (1 + eps) * h[i];
  Tensor hid = mm(agg, W1);
  add_bias(hid, b1);
  for (auto& v : hid.values()) v = std::max(v, 0.0);
  Tensor out = mm(hid, W2);
  add_bias(out, b2);
  return out;
}

Tensor dense_gat(const UnifiedGraph& g, const Tensor& h, const Tensor& W, const Tensor& as, const Tensor& ad,
                 const Tensor& b, std::size_t H, double slope) {
  const auto M = oracle::densify(g);
  const std::size_t n = M.n, F = as.row_size();
  const Tensor z = mm(h, W);
  Tensor out({n, H * F}, 0.0);
  for (std::size_t hd = 0; hd < H; ++hd) {
    std::vector<double> el(n, 0), er(n, 0);
    for (std::size_t v = 0; v < n; ++v)
      for (std::size_t f = 0; f < F; ++f) {
        el[v] += z(v, hd * F + f) * as(hd, f);
        er[v] += z(v, hd * F + f) * ad(hd, f);
      }
    for (std::size_t r = 0; r < n; ++r) {
      std::vector<double> e(n, -INFINITY);
      double mx = -INFINITY;
      for (std::size_t c = 0; c < n; ++c)
        if (M(r, c) != 0) {
          const double x = el[r] + er[c];
          e[c] = x > 0 ? x : slope * x;
          mx = std::max(mx, e[c]);
        }
      double s = 0;
      for (std::size_t c = 0; c < n; ++c)
        if (M(r, c) != 0) s += std::exp(e[c] - mx);
      for (std::size_t c = 0; c < n; ++c)
        if (M(r, c) != 0)
          for (std::size_t f = 0; f < F; ++f) out(r, hd * F + f) += std::exp(e[c] - mx) / s * z(c, hd * F + f);
    }
  }
  add_bias(out, b);
  return out;
}

Parameter rand_param(const std::string& name, std::vector<std::size_t> shape, std::mt19937_64& rng) {
  return Parameter(name, random_tensor(std::move(shape), rng));
}

}  // namespace

TEST(Layers, GcnMatchesDenseAndGradients) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_symmetric_graph(rng, 12);
    const std::size_t V = g.vcount();
    auto h = random_tensor({V, 3}, rng);
    auto W = rand_param("W", {3, 2}, rng), b = rand_param("b", {2}, rng);
    auto layer = [&](Tape& t) { return gcn_layer(g, t.constant(h), t.param(W), t.param(b)); };
    Tape t;
    EXPECT_TRUE(oracle::check_close(layer(t).value(), dense_gcn(g, h, W.value, b.value), 0, 1e-12).pass);
    EXPECT_LT(layer_grad_error({&W, &b}, random_tensor({V, 2}, rng), layer), 1e-5);
  }
}

TEST(Layers, GinMatchesDenseAndGradients) {
  std::mt19937_64 rng(32);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_symmetric_graph(rng, 12);
    const std::size_t V = g.vcount();
    auto h = random_tensor({V, 3}, rng);
    Parameter eps("eps", Tensor({1}, 0.25));
    auto W1 = rand_param("W1", {3, 4}, rng), b1 = rand_param("b1", {4}, rng);
    auto W2 = rand_param("W2", {4, 2}, rng), b2 = rand_param("b2", {2}, rng);
    GinParams p{&eps, &W1, &b1, &W2, &b2};
    auto layer = [&](Tape& t) { return gin_layer(g, t.constant(h), p); };
    Tape t;
    auto want = dense_gin(g, h, 0.25, W1.value, b1.value, W2.value, b2.value);
    EXPECT_TRUE(oracle::check_close(layer(t).value(), want, 0, 1e-12).pass);
    EXPECT_LT(layer_grad_error({&eps, &W1, &b1, &W2, &b2}, random_tensor({V, 2}, rng), layer), 1e-5);
  }
}

TEST(Layers, GatMatchesDenseAndGradients) {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 20; ++trial) {
    auto g = random_symmetric_graph(rng, 12);
    if (g.ecount() == 0) continue;
    const std::size_t V = g.vcount(), H = 1 + trial % 3, F = 2;
    auto h = random_tensor({V, 3}, rng);
    auto W = rand_param("W", {3, H * F}, rng), as = rand_param("as", {H, F}, rng);
    auto ad = rand_param("ad", {H, F}, rng), b = rand_param("b", {H * F}, rng);
    GatParams p{&W, &as, &ad, &b, H};
    auto layer = [&](Tape& t) { return gat_layer(g, t.constant(h), p, 0.2, 0.0, 0, false); };
    Tape t;
    auto want = dense_gat(g, h, W.value, as.value, ad.value, b.value, H, 0.2);
    EXPECT_TRUE(oracle::check_close(layer(t).value(), want, 0, 1e-10).pass);
    EXPECT_LT(layer_grad_error({&W, &as, &ad, &b}, random_tensor({V, H * F}, rng), layer), 1e-5);
  }
}

TEST(Layers, GatNeedsEdgeIds) {
  auto g = t4(false);
  Tape t;
  std::mt19937_64 rng(1);
  auto W = rand_param("W", {2, 2}, rng), as = rand_param("as", {1, 2}, rng), ad = rand_param("ad", {1, 2}, rng);
  auto b = rand_param("b", {2}, rng);
  EXPECT_THROW(gat_layer(g, t.constant(Tensor({4, 2}, 1.0)), {&W, &as, &ad, &b, 1}, 0.2, 0, 0, false), Error);
}

TEST(Accuracy, TiesGoToLowestIndex) {
  auto logits = Tensor::matrix(3, 2, {1, 1, 0, 2, 5, 1});
  EXPECT_DOUBLE_EQ(accuracy(logits, {0, 1, 1}, {true, true, true}), 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(accuracy(logits, {1, 1, 1}, {true, true, false}), 0.5);
  EXPECT_THROW(accuracy(logits, {0, 1, 1}, {false, false, false}), Error);
}

TEST(Model, ParameterLayout) {
  TrainConfig cfg{.model = ModelKind::gat, .heads = 3};
  Model m(cfg, 8, 2);
  EXPECT_EQ(m.param("l0.W").value.shape(), (std::vector<std::size_t>{8, 48}));
  EXPECT_EQ(m.param("l1.W").value.shape(), (std::vector<std::size_t>{48, 2}));
  EXPECT_EQ(m.param("l1.a_src").value.shape(), (std::vector<std::size_t>{1, 2}));
  EXPECT_THROW(m.param("nope"), Error);
  EXPECT_THROW(Model(TrainConfig{.layers = 0}, 8, 2), Error);
}

TEST(Train, GcnReachesHighTrainAccuracyOnSbm) {
  auto data = make_sbm_dataset();
  auto rep = train(data, {.model = ModelKind::gcn});
  EXPECT_GE(rep.final.train, 0.95);
  EXPECT_EQ(rep.epochs.size(), 200u);
  EXPECT_LT(rep.epochs.back().loss, rep.epochs.front().loss);
}

TEST(Train, SparseLossMatchesDenseOracleTwin) {
  auto data = make_sbm_dataset();
  oracle::DenseOracleBackend dense;
  auto a = train(data, {.model = ModelKind::gcn, .epochs = 50});
  auto b = train(data, {.model = ModelKind::gcn, .epochs = 50, .backend = &dense});
  ASSERT_EQ(a.epochs.size(), b.epochs.size());
  for (std::size_t e = 0; e < a.epochs.size(); ++e) EXPECT_NEAR(a.epochs[e].loss, b.epochs[e].loss, 1e-6);
}

TEST(Train, GinAndGatLearnSbm) {
  auto data = make_sbm_dataset();
  EXPECT_GE(train(data, {.model = ModelKind::gin, .epochs = 100}).final.train, 0.9);
  EXPECT_GE(train(data, {.model = ModelKind::gat, .heads = 2, .epochs = 100}).final.train, 0.9);
}

TEST(Train, LayoutsGiveSameLosses) {
  auto data = make_sbm_dataset();
  for (auto kind : {ModelKind::gcn, ModelKind::gat}) {
    auto a = train(data, {.model = kind, .epochs = 10});
    auto b = train(data, {.model = kind, .epochs = 10, .layout = LayoutMode::dgl_emulation});
    for (std::size_t e = 0; e < 10; ++e) EXPECT_NEAR(a.epochs[e].loss, b.epochs[e].loss, 1e-12);
    EXPECT_GT(b.ledger.peak_total, a.ledger.peak_total);
  }
}

TEST(Train, DeterministicForFixedSeed) {
  auto data = make_sbm_dataset();
  TrainConfig cfg{.model = ModelKind::gat, .heads = 2, .epochs = 5, .seed = 4};
  auto a = train(data, cfg), b = train(data, cfg);
  for (std::size_t e = 0; e < 5; ++e) EXPECT_EQ(a.epochs[e].loss, b.epochs[e].loss);
  EXPECT_EQ(a.final.test, b.final.test);
}

TEST(Train, ZeroEpochsReportsWithoutTraining) {
  auto data = make_sbm_dataset();
  auto rep = train(data, {.epochs = 0});
  EXPECT_TRUE(rep.epochs.empty());
  EXPECT_EQ(rep.initial.train, rep.final.train);
  EXPECT_EQ(rep.overhead.ratios.size(), 0u);
}

TEST(Train, GatWithoutEdgeIdsFails) {
  auto data = make_sbm_dataset();
  data.graph = build_graph(sbm_edges(200, 2, 0.1, 0.01, 7).edges, 200, {.symmetrize = true});
  try {
    train(data, {.model = ModelKind::gat, .epochs = 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::missing_edge_ids);
  }
}

TEST(Train, MemoryBudgetEnforced) {
  auto data = make_sbm_dataset();
  try {
    train(data, {.epochs = 1, .memory_budget = 100});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::out_of_memory);
  }
}
