#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "graphpy/autodiff.hpp"
#include "graphpy/dataset.hpp"
#include "graphpy/ledger.hpp"
#include "graphpy/timing.hpp"

namespace graphpy {

enum class ModelKind { gcn, gin, gat };

inline const char* to_string(ModelKind m) {
  switch (m) {
    case ModelKind::gcn: return "gcn";
    case ModelKind::gin: return "gin";
    case ModelKind::gat: return "gat";
  }
  return "unknown";
}

inline ModelClass model_class(ModelKind m) { return m == ModelKind::gat ? ModelClass::A : ModelClass::B; }

// ---------------------------------------------------------------------------
// Layers

// D^-1 A (H W) + b, with clamped degrees and the normalization fused into
// the aggregation.
inline Variable gcn_layer(const UnifiedGraph& g, const Variable& h, const Variable& W, const Variable& b) {
  return bias_add(spmm_v_node(g, matmul(h, W), true), b);
}

struct GinParams {
  Parameter* eps;
  Parameter *W1, *b1, *W2, *b2;
};

// MLP((1 + eps) h + sum of neighbour features); the MLP is
// linear -> relu -> linear.
inline Variable gin_layer(const UnifiedGraph& g, const Variable& h, const GinParams& p) {
  Tape& t = h.tape();
  auto agg = add(scale1p(h, t.param(*p.eps)), spmm_v_node(g, h, false));
  auto hidden = relu(bias_add(matmul(agg, t.param(*p.W1)), t.param(*p.b1)));
  return bias_add(matmul(hidden, t.param(*p.W2)), t.param(*p.b2));
}

struct GatParams {
  Parameter* W;      // [in, H*F]
  Parameter* a_src;  // [H, F], scores the aggregating (row) vertex
  Parameter* a_dst;  // [H, F], scores the neighbour (column) vertex
  Parameter* b;      // [H*F]
  std::size_t heads = 1;
};

// Additive attention: logit[j,h] = leaky_relu(<a_src, z[row_j]> + <a_dst,
// z[col_j]>), softmax over each row's slots, attention dropout, then
// weighted aggregation per head.  Heads are concatenated.
inline Variable gat_layer(const UnifiedGraph& g, const Variable& h, const GatParams& p, double slope, double attn_drop,
                          std::uint64_t seed, bool training) {
  Tape& t = h.tape();
  require(g.has_edge_ids(), ErrorCode::missing_edge_ids, "gat_layer needs a graph built with edge ids");
  auto z = matmul(h, t.param(*p.W));
  auto el = head_dot(z, t.param(*p.a_src));
  auto er = head_dot(z, t.param(*p.a_dst));
  auto zeros = t.constant(Tensor({static_cast<std::size_t>(g.ecount()), p.heads}, 0.0));
  auto logits = gsddmm_ve_node(g, el, zeros, SddmmOp::add, SddmmSide::row);
  logits = gsddmm_ve_node(g, er, logits, SddmmOp::add, SddmmSide::col);
  logits = leaky_relu(logits, slope);
  auto alpha = edge_softmax_node(g, logits);
  alpha = dropout(alpha, attn_drop, seed, training);
  return bias_add(spmm_ve_node(g, alpha, z), t.param(*p.b));
}

// ---------------------------------------------------------------------------
// Models

struct TrainConfig {
  ModelKind model = ModelKind::gcn;
  std::size_t heads = 1;
  std::size_t hidden = 0;  // 0: 16 for gcn/gat, 64 for gin
  std::size_t layers = 2;
  std::size_t epochs = 200;
  double lr = 0.01;
  double dropout = 0.5;
  double leaky_slope = 0.2;
  std::uint64_t seed = 0;
  LayoutMode layout = LayoutMode::graphpy;
  Pitfalls pitfalls{};
  const KernelBackend* backend = nullptr;  // null: sparse kernels
  std::int64_t memory_budget = 0;          // elements; 0 = unlimited
  std::size_t sddmm_chunk = 32;

  std::size_t hidden_size() const { return hidden ? hidden : (model == ModelKind::gin ? 64 : 16); }

  void validate() const {
    require(heads >= 1, ErrorCode::bad_argument, "heads must be >= 1");
    require(layers >= 1, ErrorCode::bad_argument, "layers must be >= 1");
    require(hidden_size() >= 1, ErrorCode::bad_argument, "hidden size must be positive");
    require(lr > 0.0, ErrorCode::bad_argument, "learning rate must be positive");
    require(dropout >= 0.0 && dropout < 1.0, ErrorCode::bad_argument, "dropout must be in [0, 1)");
  }
};

namespace detail {

inline Tensor glorot(std::size_t fan_in, std::size_t fan_out, std::vector<std::size_t> shape, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::uniform_real_distribution<double> u(-limit, limit);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

}  // namespace detail

// Parameters plus the forward pass of a GCN, GIN or GAT stack.  Every layer
// carries a bias.
class Model {
 public:
  Model(const TrainConfig& cfg, std::size_t in_features, std::size_t classes) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(cfg.seed);
    const std::size_t hid = cfg.hidden_size();
    std::size_t in = in_features;
    for (std::size_t l = 0; l < cfg.layers; ++l) {
      const bool last = l + 1 == cfg.layers;
      const std::string tag = "l" + std::to_string(l) + ".";
      switch (cfg.model) {
        case ModelKind::gcn: {
          const std::size_t out = last ? classes : hid;
          add_param(tag + "W", detail::glorot(in, out, {in, out}, rng));
          add_param(tag + "b", Tensor({out}, 0.0));
          in = out;
          break;
        }
        case ModelKind::gin: {
          const std::size_t out = last ? classes : hid;
          add_param(tag + "eps", Tensor({1}, 0.0));
          add_param(tag + "W1", detail::glorot(in, hid, {in, hid}, rng));
          add_param(tag + "b1", Tensor({hid}, 0.0));
          add_param(tag + "W2", detail::glorot(hid, out, {hid, out}, rng));
          add_param(tag + "b2", Tensor({out}, 0.0));
          in = out;
          break;
        }
        case ModelKind::gat: {
          // Hidden layers use cfg.heads heads of width `hid`; the output layer one head of width `classes`.
          const std::size_t H = last ? 1 : cfg.heads;
          const std::size_t F = last ? classes : hid;
          add_param(tag + "W", detail::glorot(in, H * F, {in, H * F}, rng));
          add_param(tag + "a_src", detail::glorot(F, 1, {H, F}, rng));
          add_param(tag + "a_dst", detail::glorot(F, 1, {H, F}, rng));
          add_param(tag + "b", Tensor({H * F}, 0.0));
          in = H * F;
          break;
        }
      }
    }
  }

  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const TrainConfig& config() const { return cfg_; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> out;
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  Parameter& param(const std::string& name) {
    for (auto& p : params_)
      if (p->name == name) return *p;
    fail(ErrorCode::bad_argument, "no parameter named '" + name + "'");
  }

  // Logits for every vertex.  `epoch` varies the dropout streams between epochs.
  Variable forward(Tape& t, const UnifiedGraph& g, const Tensor& features, bool training, std::uint64_t epoch = 0) {
    Variable h = t.constant(features);
    const std::uint64_t seed = cfg_.seed * 0x100000001b3ull + epoch;
    std::size_t k = 0;
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const bool last = l + 1 == cfg_.layers;
      switch (cfg_.model) {
        case ModelKind::gcn: {
          h = gcn_layer(g, h, t.param(*params_[k]), t.param(*params_[k + 1]));
          k += 2;
          if (!last) h = dropout(relu(h), cfg_.dropout, seed, training);
          break;
        }
        case ModelKind::gin: {
          GinParams p{params_[k].get(), params_[k + 1].get(), params_[k + 2].get(), params_[k + 3].get(),
                      params_[k + 4].get()};
          k += 5;
          h = gin_layer(g, h, p);
          if (!last) h = dropout(relu(h), cfg_.dropout, seed, training);
          break;
        }
        case ModelKind::gat: {
          GatParams p{params_[k].get(), params_[k + 1].get(), params_[k + 2].get(), params_[k + 3].get(),
                      last ? 1 : cfg_.heads};
          k += 4;
          h = gat_layer(g, h, p, cfg_.leaky_slope, cfg_.dropout, seed, training);
          if (!last) h = dropout(elu(h), cfg_.dropout, seed, training);
          break;
        }
      }
    }
    return h;
  }

 private:
  void add_param(std::string name, Tensor v) { params_.push_back(std::make_unique<Parameter>(std::move(name), std::move(v))); }

  TrainConfig cfg_;
  std::vector<std::unique_ptr<Parameter>> params_;
};

// ---------------------------------------------------------------------------
// Training

// Argmax match rate over masked rows; ties go to the lowest class index.
inline double accuracy(const Tensor& logits, const std::vector<std::int64_t>& labels, const std::vector<bool>& mask) {
  require(labels.size() == logits.rows() && mask.size() == logits.rows(), ErrorCode::shape,
          "labels/mask must have one entry per logit row");
  const std::size_t C = logits.row_size();
  std::size_t hit = 0, total = 0;
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    if (!mask[r]) continue;
    std::size_t best = 0;
    for (std::size_t c = 1; c < C; ++c)
      if (logits(r, c) > logits(r, best)) best = c;
    hit += static_cast<std::int64_t>(best) == labels[r] ? 1 : 0;
    ++total;
  }
  require(total > 0, ErrorCode::bad_argument, "accuracy mask selects no rows");
  return static_cast<double>(hit) / static_cast<double>(total);
}

struct Accuracies {
  double train = 0.0, val = 0.0, test = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double loss = 0.0;
  Accuracies acc;  // from the training-mode forward of this epoch
  EpochTiming timing;
};

struct TrainReport {
  Accuracies initial;  // eval-mode forward before any update
  Accuracies final;    // eval-mode forward after the last update
  std::vector<EpochRecord> epochs;
  LedgerSnapshot ledger;
  OverheadReport overhead;
  LayoutCost layout;
};

namespace detail {

inline double masked_accuracy(const Tensor& logits, const std::vector<std::int64_t>& labels,
                              const std::vector<bool>& mask) {
  for (bool m : mask)
    if (m) return accuracy(logits, labels, mask);
  return 0.0;
}

inline Accuracies all_accuracies(const Tensor& logits, const NodeDataset& d) {
  return {masked_accuracy(logits, d.labels, d.train_mask), masked_accuracy(logits, d.labels, d.val_mask),
          masked_accuracy(logits, d.labels, d.test_mask)};
}

}  // namespace detail

// Full-batch training with Adam.  Deterministic for a fixed config; only
// the timings vary between runs.
inline TrainReport train(const NodeDataset& data, const TrainConfig& cfg) {
  data.validate();
  cfg.validate();
  const auto& g = data.graph;
  if (cfg.model == ModelKind::gat)
    require(g.has_edge_ids(), ErrorCode::missing_edge_ids, "gat needs a graph built with edge ids (csc_eid)");

  TrainReport rep;
  MemoryLedger ledger;
  ledger.set_budget(cfg.memory_budget);
  KernelClock clock;
  const ExecContext ctx{&ledger, &clock, cfg.sddmm_chunk};
  TapeOptions topts{cfg.backend, ctx, cfg.layout, cfg.pitfalls};

  rep.layout = layout_cost(cfg.layout, g.vcount(), g.ecount(), model_class(cfg.model));
  for (auto c : kAllMemCategories)
    if (rep.layout.storage[c] > 0) ledger.record(c, rep.layout.storage[c]);

  Model model(cfg, data.features.row_size(), static_cast<std::size_t>(data.num_classes));
  auto params = model.parameters();
  Optimizer opt(OptimizerKind::adam, cfg.lr);

  {
    Tape t(topts);
    rep.initial = detail::all_accuracies(model.forward(t, g, data.features, false).value(), data);
  }

  EpochProfiler profiler(clock);
  std::vector<EpochTiming> timings;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    profiler.begin(static_cast<std::int64_t>(epoch));
    EpochRecord rec;
    rec.epoch = epoch;
    {
      Tape t(topts);
      auto logits = model.forward(t, g, data.features, true, epoch);
      auto loss = log_softmax_nll(logits, data.labels, data.train_mask);
      zero_grad(params);
      t.backward(loss);
      opt.step(params);
      rec.loss = loss.value()[0];
      rec.acc = detail::all_accuracies(logits.value(), data);
    }
    rec.timing = profiler.end();
    timings.push_back(rec.timing);
    rep.epochs.push_back(rec);
  }

  {
    Tape t(topts);
    rep.final = detail::all_accuracies(model.forward(t, g, data.features, false).value(), data);
  }
  rep.overhead = overhead_report(timings);
  rep.ledger = ledger.snapshot();
  return rep;
}

}  // namespace graphpy
