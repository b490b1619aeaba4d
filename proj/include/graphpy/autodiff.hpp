#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "graphpy/backend.hpp"
#include "graphpy/error.hpp"
#include "graphpy/graph.hpp"
#include "graphpy/ledger.hpp"
#include "graphpy/tensor.hpp"

namespace graphpy {

// A trainable tensor that outlives individual tapes.
struct Parameter {
  std::string name;
  Tensor value;
  std::optional<Tensor> grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}
};

// Deliberately broken behaviours, reachable only when set explicitly.  They
// exist so the pitfall demonstrations can show what each mistake does.
struct Pitfalls {
  bool skip_state_tensors = false;     // forward drops declared state tensors
  bool untransposed_backward = false;  // spmm_ve backward uses gspmm_ve instead of gspmm_ve_t
  bool normalize_after_backward = false;  // spmm_v backward normalizes after aggregating

  bool any() const { return skip_state_tensors || untransposed_backward || normalize_after_backward; }
};

enum class OpKind {
  leaf,
  matmul,
  bias_add,
  add,
  relu,
  leaky_relu,
  elu,
  dropout,
  fused_relu_dropout,
  log_softmax_nll,
  scale1p,
  head_dot,
  spmm_v,
  spmm_ve,
  gsddmm_ve,
  edge_softmax,
  weighted_sum,
};

inline const char* to_string(OpKind k) {
  switch (k) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::bias_add: return "bias_add";
    case OpKind::add: return "add";
    case OpKind::relu: return "relu";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::elu: return "elu";
    case OpKind::dropout: return "dropout";
    case OpKind::fused_relu_dropout: return "fused_relu_dropout";
    case OpKind::log_softmax_nll: return "log_softmax_nll";
    case OpKind::scale1p: return "scale1p";
    case OpKind::head_dot: return "head_dot";
    case OpKind::spmm_v: return "spmm_v";
    case OpKind::spmm_ve: return "spmm_ve";
    case OpKind::gsddmm_ve: return "gsddmm_ve";
    case OpKind::edge_softmax: return "edge_softmax";
    case OpKind::weighted_sum: return "weighted_sum";
  }
  return "unknown";
}

using NodeId = std::size_t;
class Tape;

struct TapeNode {
  OpKind kind = OpKind::leaf;
  std::vector<NodeId> inputs;
  std::shared_ptr<const Tensor> value;
  std::optional<Tensor> grad;
  bool requires_grad = false;
  std::vector<std::string> declared_state;
  std::map<std::string, std::shared_ptr<const Tensor>> saved;
  std::function<void(Tape&, NodeId)> backward;
  Parameter* param = nullptr;
};

// Handle to a tape node.
class Variable {
 public:
  Variable() = default;
  Variable(Tape* tape, NodeId id) : tape_(tape), id_(id) {}

  Tape& tape() const { return *tape_; }
  NodeId node_id() const noexcept { return id_; }
  const Tensor& value() const;
  const std::optional<Tensor>& grad() const;
  bool requires_grad() const;

 private:
  Tape* tape_ = nullptr;
  NodeId id_ = 0;
};

// Counter-based uniform generator: the same (seed, stream, index) always
// yields the same value in [0, 1).
inline double counter_uniform(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  };
  const std::uint64_t h = mix(mix(seed ^ mix(stream)) + index);
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

struct TapeOptions {
  const KernelBackend* backend = nullptr;  // defaults to the sparse kernels
  ExecContext ctx{};
  LayoutMode layout = LayoutMode::graphpy;
  Pitfalls pitfalls{};
};

// Reverse-mode tape.  Nodes are registered in forward order; backward
// replays them in exactly the reverse order.  One tape serves one forward
// and one backward pass.
class Tape {
 public:
  explicit Tape(TapeOptions opts = {}) : opts_(opts) {
    if (!opts_.backend) opts_.backend = &sparse_backend();
  }
  ~Tape() { release(); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  const KernelBackend& backend() const { return *opts_.backend; }
  const ExecContext& ctx() const { return opts_.ctx; }
  LayoutMode layout() const { return opts_.layout; }
  const Pitfalls& pitfalls() const { return opts_.pitfalls; }
  MemoryLedger* ledger() const { return opts_.ctx.ledger; }

  Variable constant(Tensor v) { return leaf(std::move(v), false, nullptr); }
  Variable input(Tensor v, bool requires_grad = true) { return leaf(std::move(v), requires_grad, nullptr); }
  Variable param(Parameter& p) { return leaf(p.value, true, &p); }

  // Registers an op node.  `requires_grad` is inherited from the inputs.
  NodeId push(OpKind kind, std::vector<NodeId> inputs, Tensor value, std::vector<std::string> declared_state,
              std::function<void(Tape&, NodeId)> backward) {
    TapeNode n;
    n.kind = kind;
    for (auto i : inputs) n.requires_grad = n.requires_grad || nodes_.at(i).requires_grad;
    n.inputs = std::move(inputs);
    n.declared_state = std::move(declared_state);
    n.backward = std::move(backward);
    n.value = std::make_shared<const Tensor>(std::move(value));
    record(MemCategory::activation, static_cast<std::int64_t>(n.value->size()));
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  // Stores a declared state tensor for the node's backward rule.  Skipped
  // entirely when the state-skipping pitfall is enabled.
  void save(NodeId id, const std::string& name, std::shared_ptr<const Tensor> t) {
    auto& n = nodes_.at(id);
    require(std::find(n.declared_state.begin(), n.declared_state.end(), name) != n.declared_state.end(),
            ErrorCode::bad_argument, std::string(to_string(n.kind)) + " does not declare state '" + name + "'");
    if (opts_.pitfalls.skip_state_tensors) return;
    record(MemCategory::state_tensor, static_cast<std::int64_t>(t->size()));
    n.saved[name] = std::move(t);
  }
  void save(NodeId id, const std::string& name, Tensor t) {
    save(id, name, std::make_shared<const Tensor>(std::move(t)));
  }

  const Tensor& saved(NodeId id, const std::string& name) const {
    const auto& n = nodes_.at(id);
    auto it = n.saved.find(name);
    if (it == n.saved.end())
      fail(ErrorCode::state_tensor_missing, std::string(to_string(n.kind)) + " node " + std::to_string(id) +
                                                " has no saved state tensor '" + name + "'");
    return *it->second;
  }

  std::shared_ptr<const Tensor> value_ptr(NodeId id) const { return nodes_.at(id).value; }
  const TapeNode& node(NodeId id) const { return nodes_.at(id); }
  TapeNode& node(NodeId id) { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }

  // Adds `g` into the gradient of node `id` (no-op for nodes without grad).
  void accumulate(NodeId id, const Tensor& g) {
    auto& n = nodes_.at(id);
    if (!n.requires_grad) return;
    require(g.size() == n.value->size(), ErrorCode::shape,
            "gradient shape " + g.shape_string() + " does not match value " + n.value->shape_string());
    if (!n.grad) {
      n.grad = Tensor(n.value->shape(), g.storage());
    } else {
      auto& d = n.grad->storage();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
    }
  }
  void accumulate(NodeId id, Tensor&& g) {
    auto& n = nodes_.at(id);
    if (n.requires_grad && !n.grad && g.size() == n.value->size()) {
      n.grad = Tensor(n.value->shape(), std::move(g.storage()));
      return;
    }
    accumulate(id, static_cast<const Tensor&>(g));
  }

  // Seeds d(loss)/d(loss) = 1 and runs every backward rule from the newest
  // node down to the oldest.  Parameter leaves add their gradient into the
  // owning Parameter.
  void backward(const Variable& loss) {
    require(!backward_done_, ErrorCode::backward_twice, "backward already ran on this tape; reset it first");
    auto& root = nodes_.at(loss.node_id());
    require(root.value->size() == 1, ErrorCode::non_scalar_loss,
            "loss must be scalar, got shape " + root.value->shape_string());
    backward_done_ = true;
    if (!root.requires_grad) return;
    root.grad = Tensor(root.value->shape(), 1.0);
    for (NodeId id = nodes_.size(); id-- > 0;) {
      auto& n = nodes_[id];
      if (!n.grad) continue;
      if (n.kind == OpKind::leaf) {
        if (n.param) {
          if (!n.param->grad) n.param->grad = Tensor(n.param->value.shape(), 0.0);
          auto& d = n.param->grad->storage();
          for (std::size_t i = 0; i < d.size(); ++i) d[i] += (*n.grad)[i];
        }
        continue;
      }
      replay_.push_back(id);
      n.backward(*this, id);
    }
  }

  // Node ids whose backward rule ran, in execution order.
  const std::vector<NodeId>& replay_order() const noexcept { return replay_; }

  // Drops all nodes and releases their ledger entries.
  void reset() {
    release();
    nodes_.clear();
    replay_.clear();
    backward_done_ = false;
  }

  void record(MemCategory c, std::int64_t n) const {
    if (opts_.ctx.ledger) opts_.ctx.ledger->record(c, n);
  }

  std::uint64_t next_stream() { return stream_++; }

 private:
  Variable leaf(Tensor v, bool requires_grad, Parameter* p) {
    TapeNode n;
    n.kind = OpKind::leaf;
    n.requires_grad = requires_grad;
    n.param = p;
    n.value = std::make_shared<const Tensor>(std::move(v));
    nodes_.push_back(std::move(n));
    return {this, nodes_.size() - 1};
  }

  void release() {
    for (const auto& n : nodes_) {
      if (n.kind != OpKind::leaf) record(MemCategory::activation, -static_cast<std::int64_t>(n.value->size()));
      for (const auto& [name, t] : n.saved) record(MemCategory::state_tensor, -static_cast<std::int64_t>(t->size()));
    }
  }

  TapeOptions opts_;
  std::vector<TapeNode> nodes_;
  std::vector<NodeId> replay_;
  bool backward_done_ = false;
  std::uint64_t stream_ = 0;
};

inline const Tensor& Variable::value() const { return *tape_->node(id_).value; }
inline const std::optional<Tensor>& Variable::grad() const { return tape_->node(id_).grad; }
inline bool Variable::requires_grad() const { return tape_->node(id_).requires_grad; }

inline void backward(const Variable& loss) { loss.tape().backward(loss); }

namespace detail {

inline Tensor matmul_raw(const Tensor& A, const Tensor& B, bool ta, bool tb) {
  const std::size_t ar = A.rows(), ac = A.row_size();
  const std::size_t br = B.rows(), bc = B.row_size();
  const std::size_t m = ta ? ac : ar, k = ta ? ar : ac;
  const std::size_t kb = tb ? bc : br, n = tb ? br : bc;
  require(k == kb, ErrorCode::shape,
          "matmul inner dimensions differ: " + A.shape_string() + " x " + B.shape_string());
  Tensor C({m, n});
  const double* a = A.data();
  const double* b = B.data();
  double* c = C.data();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double av = ta ? a[p * ac + i] : a[i * ac + p];
      if (av == 0.0) continue;
      double* crow = c + i * n;
      if (tb) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * b[j * bc + p];
      } else {
        const double* brow = b + p * bc;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  return C;
}

inline Tensor elementwise(const Tensor& a, const Tensor& b, double (*f)(double, double)) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

inline Tensor negate(Tensor t) {
  for (auto& v : t.values()) v = -v;
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dense ops

// A [m,k] x B [k,n].  Saves both inputs.
inline Variable matmul(const Variable& A, const Variable& B) {
  Tape& t = A.tape();
  auto out = detail::matmul_raw(A.value(), B.value(), false, false);
  auto id = t.push(OpKind::matmul, {A.node_id(), B.node_id()}, std::move(out), {"lhs", "rhs"},
                   [](Tape& t, NodeId id) {
                     const auto& n = t.node(id);
                     const auto& g = *n.grad;
                     const auto& a = t.saved(id, "lhs");
                     const auto& b = t.saved(id, "rhs");
                     if (t.node(n.inputs[0]).requires_grad) t.accumulate(n.inputs[0], detail::matmul_raw(g, b, false, true));
                     if (t.node(n.inputs[1]).requires_grad) t.accumulate(n.inputs[1], detail::matmul_raw(a, g, true, false));
                   });
  t.save(id, "lhs", t.value_ptr(A.node_id()));
  t.save(id, "rhs", t.value_ptr(B.node_id()));
  return {&t, id};
}

// X + b with b broadcast over rows (b holds one row's worth of elements).
inline Variable bias_add(const Variable& X, const Variable& b) {
  Tape& t = X.tape();
  const auto& x = X.value();
  const auto& bv = b.value();
  require(bv.size() == x.row_size(), ErrorCode::shape,
          "bias of size " + std::to_string(bv.size()) + " does not match row size " + std::to_string(x.row_size()));
  Tensor out = x;
  const std::size_t C = x.row_size();
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < C; ++c) out[r * C + c] += bv[c];
  auto id = t.push(OpKind::bias_add, {X.node_id(), b.node_id()}, std::move(out), {}, [](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    const auto& g = *n.grad;
    t.accumulate(n.inputs[0], g);
    if (t.node(n.inputs[1]).requires_grad) {
      Tensor gb(t.node(n.inputs[1]).value->shape(), 0.0);
      const std::size_t C = g.row_size();
      for (std::size_t r = 0; r < g.rows(); ++r)
        for (std::size_t c = 0; c < C; ++c) gb[c] += g[r * C + c];
      t.accumulate(n.inputs[1], std::move(gb));
    }
  });
  return {&t, id};
}

inline Variable add(const Variable& A, const Variable& B) {
  Tape& t = A.tape();
  require(A.value().size() == B.value().size(), ErrorCode::shape, "add operands differ in size");
  auto out = detail::elementwise(A.value(), B.value(), [](double a, double b) { return a + b; });
  auto id = t.push(OpKind::add, {A.node_id(), B.node_id()}, std::move(out), {}, [](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    t.accumulate(n.inputs[0], *n.grad);
    t.accumulate(n.inputs[1], *n.grad);
  });
  return {&t, id};
}

// max(x, 0).  Saves the output mask.
inline Variable relu(const Variable& X) {
  Tape& t = X.tape();
  const auto& x = X.value();
  Tensor out(x.shape()), mask(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = x[i] > 0.0 ? 1.0 : 0.0;
    out[i] = x[i] > 0.0 ? x[i] : 0.0;
  }
  auto id = t.push(OpKind::relu, {X.node_id()}, std::move(out), {"mask"}, [](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    t.accumulate(n.inputs[0], detail::elementwise(*n.grad, t.saved(id, "mask"), [](double g, double m) { return g * m; }));
  });
  t.save(id, "mask", std::move(mask));
  return {&t, id};
}

// x for x > 0, slope * x otherwise.  Saves the per-element derivative.
inline Variable leaky_relu(const Variable& X, double slope) {
  Tape& t = X.tape();
  const auto& x = X.value();
  Tensor out(x.shape()), deriv(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    deriv[i] = x[i] > 0.0 ? 1.0 : slope;
    out[i] = x[i] * deriv[i];
  }
  auto id = t.push(OpKind::leaky_relu, {X.node_id()}, std::move(out), {"deriv"}, [](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    t.accumulate(n.inputs[0], detail::elementwise(*n.grad, t.saved(id, "deriv"), [](double g, double d) { return g * d; }));
  });
  t.save(id, "deriv", std::move(deriv));
  return {&t, id};
}

// x for x > 0, exp(x) - 1 otherwise.  Saves the output.
inline Variable elu(const Variable& X) {
  Tape& t = X.tape();
  const auto& x = X.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : std::expm1(x[i]);
  auto id = t.push(OpKind::elu, {X.node_id()}, out, {"output"}, [](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    t.accumulate(n.inputs[0], detail::elementwise(*n.grad, t.saved(id, "output"),
                                                  [](double g, double y) { return y > 0.0 ? g : g * (y + 1.0); }));
  });
  t.save(id, "output", std::move(out));
  return {&t, id};
}

// Inverted dropout.  Identity when not training or p == 0; otherwise saves
// the scaled keep-mask.
inline Variable dropout(const Variable& X, double p, std::uint64_t seed, bool training) {
  require(p >= 0.0 && p < 1.0, ErrorCode::bad_argument, "dropout probability must be in [0, 1)");
  Tape& t = X.tape();
  const auto& x = X.value();
  if (!training || p == 0.0) {
    auto id = t.push(OpKind::dropout, {X.node_id()}, x, {}, [](Tape& t, NodeId id) {
      t.accumulate(t.node(id).inputs[0], *t.node(id).grad);
    });
    return {&t, id};
  }
  const auto stream = t.next_stream();
  Tensor mask(x.shape()), out(x.shape());
  const double keep = 1.0 / (1.0 - p);
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = counter_uniform(seed, stream, i) >= p ? keep : 0.0;
    out[i] = x[i] * mask[i];
  }
  auto id = t.push(OpKind::dropout, {X.node_id()}, std::move(out), {"mask"}, [](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    t.accumulate(n.inputs[0], detail::elementwise(*n.grad, t.saved(id, "mask"), [](double g, double m) { return g * m; }));
  });
  t.save(id, "mask", std::move(mask));
  return {&t, id};
}

// relu followed by dropout in one node.  Declares the combined mask as its
// state; with the state-skipping pitfall enabled it is the node whose
// backward fails.
inline Variable fused_relu_dropout(const Variable& X, double p, std::uint64_t seed) {
  require(p >= 0.0 && p < 1.0, ErrorCode::bad_argument, "dropout probability must be in [0, 1)");
  Tape& t = X.tape();
  const auto& x = X.value();
  const auto stream = t.next_stream();
  const double keep = 1.0 / (1.0 - p);
  Tensor mask(x.shape()), out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = counter_uniform(seed, stream, i) >= p ? keep : 0.0;
    mask[i] = x[i] > 0.0 ? d : 0.0;
    out[i] = x[i] * mask[i];
  }
  auto id = t.push(OpKind::fused_relu_dropout, {X.node_id()}, std::move(out), {"mask"}, [](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    t.accumulate(n.inputs[0], detail::elementwise(*n.grad, t.saved(id, "mask"), [](double g, double m) { return g * m; }));
  });
  t.save(id, "mask", std::move(mask));
  return {&t, id};
}

// Mean negative log-likelihood of row-wise log-softmax over masked rows.
// Saves the softmax probabilities.
inline Variable log_softmax_nll(const Variable& X, const std::vector<std::int64_t>& labels,
                                const std::vector<bool>& mask) {
  Tape& t = X.tape();
  const auto& x = X.value();
  const std::size_t n = x.rows(), C = x.row_size();
  require(labels.size() == n && mask.size() == n, ErrorCode::shape, "labels/mask length must equal row count");
  std::size_t count = 0;
  for (bool m : mask) count += m ? 1 : 0;
  require(count > 0, ErrorCode::bad_argument, "loss mask selects no rows");
  Tensor prob(x.shape());
  double loss = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    const double* row = x.data() + r * C;
    double mx = row[0];
    for (std::size_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
    double s = 0.0;
    for (std::size_t c = 0; c < C; ++c) s += std::exp(row[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < C; ++c) prob[r * C + c] = std::exp(row[c] - lse);
    if (mask[r]) {
      require(labels[r] >= 0 && static_cast<std::size_t>(labels[r]) < C, ErrorCode::bad_argument,
              "label out of range at row " + std::to_string(r));
      loss -= row[labels[r]] - lse;
    }
  }
  loss /= static_cast<double>(count);
  auto id = t.push(OpKind::log_softmax_nll, {X.node_id()}, Tensor({1}, loss), {"softmax"},
                   [labels, mask, count](Tape& t, NodeId id) {
                     const auto& nd = t.node(id);
                     const double g = (*nd.grad)[0] / static_cast<double>(count);
                     Tensor dx = t.saved(id, "softmax");
                     const std::size_t C = dx.row_size();
                     for (std::size_t r = 0; r < dx.rows(); ++r) {
                       if (!mask[r]) {
                         for (std::size_t c = 0; c < C; ++c) dx[r * C + c] = 0.0;
                         continue;
                       }
                       dx[r * C + static_cast<std::size_t>(labels[r])] -= 1.0;
                       for (std::size_t c = 0; c < C; ++c) dx[r * C + c] *= g;
                     }
                     t.accumulate(nd.inputs[0], std::move(dx));
                   });
  t.save(id, "softmax", std::move(prob));
  return {&t, id};
}

// (1 + eps) * X with a trainable scalar eps.  Saves X and eps.
inline Variable scale1p(const Variable& X, const Variable& eps) {
  Tape& t = X.tape();
  require(eps.value().size() == 1, ErrorCode::shape, "eps must be a scalar");
  const double s = 1.0 + eps.value()[0];
  Tensor out = X.value();
  for (auto& v : out.values()) v *= s;
  auto id = t.push(OpKind::scale1p, {X.node_id(), eps.node_id()}, std::move(out), {"input", "eps"},
                   [](Tape& t, NodeId id) {
                     const auto& n = t.node(id);
                     const auto& g = *n.grad;
                     const auto& x = t.saved(id, "input");
                     const double s = 1.0 + t.saved(id, "eps")[0];
                     Tensor dx(g.shape());
                     double de = 0.0;
                     for (std::size_t i = 0; i < g.size(); ++i) {
                       dx[i] = g[i] * s;
                       de += g[i] * x[i];
                     }
                     t.accumulate(n.inputs[0], std::move(dx));
                     t.accumulate(n.inputs[1], Tensor(t.node(n.inputs[1]).value->shape(), de));
                   });
  t.save(id, "input", t.value_ptr(X.node_id()));
  t.save(id, "eps", t.value_ptr(eps.node_id()));
  return {&t, id};
}

// Per-head dot product: Z [n, H*F] with a [H, F] -> [n, H].  Saves both.
inline Variable head_dot(const Variable& Z, const Variable& a) {
  Tape& t = Z.tape();
  const auto& z = Z.value();
  const auto& av = a.value();
  const std::size_t H = av.rows(), F = av.row_size();
  require(z.row_size() == H * F, ErrorCode::shape, "head_dot: Z row size must equal H*F of the attention vector");
  Tensor out({z.rows(), H});
  for (std::size_t v = 0; v < z.rows(); ++v)
    for (std::size_t h = 0; h < H; ++h) {
      double s = 0.0;
      for (std::size_t f = 0; f < F; ++f) s += z[v * H * F + h * F + f] * av[h * F + f];
      out[v * H + h] = s;
    }
  auto id = t.push(OpKind::head_dot, {Z.node_id(), a.node_id()}, std::move(out), {"z", "a"}, [](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    const auto& g = *n.grad;
    const auto& z = t.saved(id, "z");
    const auto& av = t.saved(id, "a");
    const std::size_t H = av.rows(), F = av.row_size();
    Tensor dz(z.shape()), da(av.shape());
    for (std::size_t v = 0; v < z.rows(); ++v)
      for (std::size_t h = 0; h < H; ++h) {
        const double gv = g[v * H + h];
        for (std::size_t f = 0; f < F; ++f) {
          dz[v * H * F + h * F + f] = gv * av[h * F + f];
          da[h * F + f] += gv * z[v * H * F + h * F + f];
        }
      }
    t.accumulate(n.inputs[0], std::move(dz));
    t.accumulate(n.inputs[1], std::move(da));
  });
  t.save(id, "z", t.value_ptr(Z.node_id()));
  t.save(id, "a", t.value_ptr(a.node_id()));
  return {&t, id};
}

// ---------------------------------------------------------------------------
// Graph ops

namespace detail {

// Unweighted aggregation as the DGL-style layout performs it: a dummy
// all-ones edge tensor fed to the weighted kernel, then a separate
// normalization against a freshly clamped degree buffer.
inline Tensor emulated_spmm_v(const Tape& t, const UnifiedGraph& g, const Tensor& X, bool norm) {
  ScopedAllocation dummy_alloc(t.ledger(), MemCategory::dummy_edge_tensor, static_cast<std::int64_t>(g.ecount()));
  const Tensor dummy({static_cast<std::size_t>(g.ecount()), 1}, 1.0);
  Tensor out = t.backend().gspmm_ve(g, dummy, X, t.ctx());
  if (norm) {
    ScopedAllocation deg_alloc(t.ledger(), MemCategory::degree_aux, static_cast<std::int64_t>(g.vcount()));
    t.backend().norm_by_degree_inplace(g, out, t.ctx());
  }
  return out;
}

}  // namespace detail

// Y = gspmm_v(g, X, sum, norm).  Backward on a symmetric graph: normalize
// the incoming gradient in place first, then aggregate with the same
// (self-transposed) topology.  No state tensors.
inline Variable spmm_v_node(const UnifiedGraph& g, const Variable& X, bool norm) {
  Tape& t = X.tape();
  require(g.is_symmetric(), ErrorCode::asymmetric, "spmm_v_node reuses A as its transpose and needs symmetry");
  Tensor out = t.layout() == LayoutMode::graphpy ? t.backend().gspmm_v(g, X.value(), norm, t.ctx())
                                                 : detail::emulated_spmm_v(t, g, X.value(), norm);
  auto id = t.push(OpKind::spmm_v, {X.node_id()}, std::move(out), {}, [&g, norm](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    if (!t.node(n.inputs[0]).requires_grad) return;
    Tensor grad = *n.grad;
    Tensor dx;
    if (norm && t.pitfalls().normalize_after_backward) {
      dx = t.backend().gspmm_v(g, grad, false, t.ctx());
      t.backend().norm_by_degree_inplace(g, dx, t.ctx());
    } else {
      if (norm) {
        if (t.layout() == LayoutMode::graphpy) {
          t.backend().norm_by_degree_inplace(g, grad, t.ctx());
        } else {
          ScopedAllocation deg_alloc(t.ledger(), MemCategory::degree_aux, static_cast<std::int64_t>(g.vcount()));
          t.backend().norm_by_degree_inplace(g, grad, t.ctx());
        }
      }
      dx = t.layout() == LayoutMode::graphpy ? t.backend().gspmm_v(g, grad, false, t.ctx())
                                             : detail::emulated_spmm_v(t, g, grad, false);
    }
    t.accumulate(n.inputs[0], std::move(dx));
  });
  return {&t, id};
}

// Y = gspmm_ve(g, We, X).  Backward: dX = gspmm_ve_t(g, We, dY) and
// dWe = gsddmm_vv(g, dY, X).  Saves We and X.
inline Variable spmm_ve_node(const UnifiedGraph& g, const Variable& We, const Variable& X) {
  Tape& t = X.tape();
  require(g.has_edge_ids(), ErrorCode::missing_edge_ids, "spmm_ve_node needs a graph built with edge ids");
  Tensor out = t.backend().gspmm_ve(g, We.value(), X.value(), t.ctx());
  auto id = t.push(OpKind::spmm_ve, {We.node_id(), X.node_id()}, std::move(out), {"We", "X"}, [&g](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    const auto& gy = *n.grad;
    const auto& we = t.saved(id, "We");
    const auto& x = t.saved(id, "X");
    if (t.node(n.inputs[1]).requires_grad) {
      Tensor dx;
      if (t.pitfalls().untransposed_backward) {
        dx = t.backend().gspmm_ve(g, we, gy, t.ctx());
      } else if (t.layout() == LayoutMode::dgl_emulation) {
        Tensor shuffled = t.backend().e_shuffle(g, we, t.ctx());
        dx = t.backend().gspmm_ve(g, shuffled, gy, t.ctx());
        t.record(MemCategory::shuffle_intermediate, -static_cast<std::int64_t>(shuffled.size()));
      } else {
        dx = t.backend().gspmm_ve_t(g, we, gy, t.ctx());
      }
      t.accumulate(n.inputs[1], std::move(dx));
    }
    if (t.node(n.inputs[0]).requires_grad)
      t.accumulate(n.inputs[0], t.backend().gsddmm_vv(g, gy, x, we.row_size(), t.ctx()));
  });
  t.save(id, "We", t.value_ptr(We.node_id()));
  t.save(id, "X", t.value_ptr(X.node_id()));
  return {&t, id};
}

// out[j] = We[j] OP Xv[side(j)].  Vertex gradients are scattered back with
// gspmm_e (transposed for the column side).  Saves the operands mul/div need.
inline Variable gsddmm_ve_node(const UnifiedGraph& g, const Variable& Xv, const Variable& We, SddmmOp op,
                               SddmmSide side) {
  Tape& t = We.tape();
  Tensor out = t.backend().gsddmm_ve(g, Xv.value(), We.value(), op, side, t.ctx());
  const bool needs_state = op == SddmmOp::mul || op == SddmmOp::div;
  std::vector<std::string> state;
  if (needs_state) state = {"Xv", "We"};
  auto id = t.push(OpKind::gsddmm_ve, {Xv.node_id(), We.node_id()}, std::move(out), state,
                   [&g, op, side](Tape& t, NodeId id) {
                     const auto& n = t.node(id);
                     const auto& gy = *n.grad;
                     const auto& be = t.backend();
                     const bool col = side == SddmmSide::col;
                     if (col && t.node(n.inputs[0]).requires_grad)
                       require(g.has_edge_ids(), ErrorCode::missing_edge_ids,
                               "column-side gsddmm_ve gradient needs edge ids");
                     auto scatter = [&](const Tensor& e) { return be.gspmm_e(g, e, ReduceOp::sum, col, t.ctx()); };
                     switch (op) {
                       case SddmmOp::add:
                       case SddmmOp::sub:
                         t.accumulate(n.inputs[1], gy);
                         if (t.node(n.inputs[0]).requires_grad)
                           t.accumulate(n.inputs[0], op == SddmmOp::add ? scatter(gy) : detail::negate(scatter(gy)));
                         break;
                       case SddmmOp::mul: {
                         const auto& xv = t.saved(id, "Xv");
                         const auto& we = t.saved(id, "We");
                         if (t.node(n.inputs[1]).requires_grad)
                           t.accumulate(n.inputs[1], be.gsddmm_ve(g, xv, gy, SddmmOp::mul, side, t.ctx()));
                         if (t.node(n.inputs[0]).requires_grad)
                           t.accumulate(n.inputs[0],
                                        scatter(detail::elementwise(gy, we, [](double a, double b) { return a * b; })));
                         break;
                       }
                       case SddmmOp::div: {
                         const auto& xv = t.saved(id, "Xv");
                         const auto& we = t.saved(id, "We");
                         if (t.node(n.inputs[1]).requires_grad)
                           t.accumulate(n.inputs[1], be.gsddmm_ve(g, xv, gy, SddmmOp::div, side, t.ctx()));
                         if (t.node(n.inputs[0]).requires_grad) {
                           // d/dx (w / x) = -w / x^2 = -(w / x) / x
                           auto q = be.gsddmm_ve(g, xv, we, SddmmOp::div, side, t.ctx());
                           q = be.gsddmm_ve(g, xv, q, SddmmOp::div, side, t.ctx());
                           auto prod = detail::elementwise(gy, q, [](double a, double b) { return -a * b; });
                           t.accumulate(n.inputs[0], scatter(prod));
                         }
                         break;
                       }
                     }
                   });
  if (needs_state) {
    t.save(id, "Xv", t.value_ptr(Xv.node_id()));
    t.save(id, "We", t.value_ptr(We.node_id()));
  }
  return {&t, id};
}

// Row-wise softmax over incident slots.  Saves its output s; backward is
// dl = s * (ds - rowsum(s * ds)) built from gspmm_e and gsddmm_ve.
inline Variable edge_softmax_node(const UnifiedGraph& g, const Variable& logits) {
  Tape& t = logits.tape();
  Tensor s = t.backend().edge_softmax(g, logits.value(), t.ctx());
  auto id = t.push(OpKind::edge_softmax, {logits.node_id()}, s, {"softmax"}, [&g](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    const auto& gy = *n.grad;
    const auto& s = t.saved(id, "softmax");
    const auto& be = t.backend();
    auto sg = detail::elementwise(s, gy, [](double a, double b) { return a * b; });
    auto row_dot = be.gspmm_e(g, sg, ReduceOp::sum, false, t.ctx());
    auto centered = be.gsddmm_ve(g, row_dot, gy, SddmmOp::sub, SddmmSide::row, t.ctx());
    t.accumulate(n.inputs[0], detail::elementwise(s, centered, [](double a, double b) { return a * b; }));
  });
  t.save(id, "softmax", std::move(s));
  return {&t, id};
}

// Sum of all elements of X weighted by a constant tensor R; a convenient
// scalar probe for gradient checks.
inline Variable weighted_sum(const Variable& X, const Tensor& R) {
  Tape& t = X.tape();
  require(R.size() == X.value().size(), ErrorCode::shape, "weighted_sum weights must match X");
  double s = 0.0;
  for (std::size_t i = 0; i < R.size(); ++i) s += X.value()[i] * R[i];
  auto w = std::make_shared<const Tensor>(R);
  auto id = t.push(OpKind::weighted_sum, {X.node_id()}, Tensor({1}, s), {}, [w](Tape& t, NodeId id) {
    const auto& n = t.node(id);
    Tensor d(*w);
    for (auto& v : d.values()) v *= (*n.grad)[0];
    t.accumulate(n.inputs[0], std::move(d));
  });
  return {&t, id};
}

// ---------------------------------------------------------------------------
// Optimizers

enum class OptimizerKind { sgd, adam };

class Optimizer {
 public:
  explicit Optimizer(OptimizerKind kind, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : kind_(kind), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  OptimizerKind kind() const noexcept { return kind_; }
  double lr() const noexcept { return lr_; }

  void step(const std::vector<Parameter*>& params) {
    ++t_;
    for (Parameter* p : params) {
      if (!p->grad) fail(ErrorCode::missing_grad, "parameter '" + p->name + "' has no gradient");
      const auto& g = *p->grad;
      auto& w = p->value;
      if (kind_ == OptimizerKind::sgd) {
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= lr_ * g[i];
        continue;
      }
      auto& st = moments_[p];
      if (st.m.empty()) {
        st.m = Tensor(w.shape(), 0.0);
        st.v = Tensor(w.shape(), 0.0);
      }
      const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
      const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
      for (std::size_t i = 0; i < w.size(); ++i) {
        st.m[i] = beta1_ * st.m[i] + (1.0 - beta1_) * g[i];
        st.v[i] = beta2_ * st.v[i] + (1.0 - beta2_) * g[i] * g[i];
        const double mhat = st.m[i] / bc1;
        const double vhat = st.v[i] / bc2;
        w[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

 private:
  struct Moments {
    Tensor m, v;
  };
  OptimizerKind kind_;
  double lr_, beta1_, beta2_, eps_;
  std::int64_t t_ = 0;
  std::map<const Parameter*, Moments> moments_;
};

inline void step(Optimizer& opt, const std::vector<Parameter*>& params) { opt.step(params); }

inline void zero_grad(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->grad = Tensor(p->value.shape(), 0.0);
}

}  // namespace graphpy
