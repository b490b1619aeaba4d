#pragma once

#include "graphpy/kernels.hpp"

namespace graphpy {

// The graph-kernel surface the autodiff layer runs on.  The sparse backend
// forwards to the kernels; the dense oracle backend (oracle_backend.hpp)
// provides an independent twin for equivalence runs.
class KernelBackend {
 public:
  virtual ~KernelBackend() = default;

  virtual Tensor gspmm_v(const UnifiedGraph& g, const Tensor& X, bool norm, const ExecContext& ctx) const = 0;
  virtual void norm_by_degree_inplace(const UnifiedGraph& g, Tensor& X, const ExecContext& ctx) const = 0;
  virtual Tensor gspmm_ve(const UnifiedGraph& g, const Tensor& We, const Tensor& X, const ExecContext& ctx) const = 0;
  virtual Tensor gspmm_ve_t(const UnifiedGraph& g, const Tensor& We, const Tensor& X,
                            const ExecContext& ctx) const = 0;
  virtual Tensor gspmm_e(const UnifiedGraph& g, const Tensor& We, ReduceOp reduce, bool transposed,
                         const ExecContext& ctx) const = 0;
  virtual Tensor gsddmm_vv(const UnifiedGraph& g, const Tensor& Xr, const Tensor& Xc, std::size_t heads,
                           const ExecContext& ctx) const = 0;
  virtual Tensor gsddmm_ve(const UnifiedGraph& g, const Tensor& Xv, const Tensor& We, SddmmOp op, SddmmSide side,
                           const ExecContext& ctx) const = 0;
  virtual Tensor e_shuffle(const UnifiedGraph& g, const Tensor& We, const ExecContext& ctx) const = 0;
  virtual Tensor edge_softmax(const UnifiedGraph& g, const Tensor& logits, const ExecContext& ctx) const = 0;
};

class SparseBackend final : public KernelBackend {
 public:
  Tensor gspmm_v(const UnifiedGraph& g, const Tensor& X, bool norm, const ExecContext& ctx) const override {
    return kernels::gspmm_v(g, X, ReduceOp::sum, norm, ctx);
  }
  void norm_by_degree_inplace(const UnifiedGraph& g, Tensor& X, const ExecContext& ctx) const override {
    kernels::norm_by_degree_inplace(g, X, ctx);
  }
  Tensor gspmm_ve(const UnifiedGraph& g, const Tensor& We, const Tensor& X, const ExecContext& ctx) const override {
    return kernels::gspmm_ve(g, We, X, ctx);
  }
  Tensor gspmm_ve_t(const UnifiedGraph& g, const Tensor& We, const Tensor& X,
                    const ExecContext& ctx) const override {
    return kernels::gspmm_ve_t(g, We, X, ctx);
  }
  Tensor gspmm_e(const UnifiedGraph& g, const Tensor& We, ReduceOp reduce, bool transposed,
                 const ExecContext& ctx) const override {
    return kernels::gspmm_e(g, We, reduce, transposed, ctx);
  }
  Tensor gsddmm_vv(const UnifiedGraph& g, const Tensor& Xr, const Tensor& Xc, std::size_t heads,
                   const ExecContext& ctx) const override {
    return kernels::gsddmm_vv(g, Xr, Xc, heads, ctx);
  }
  Tensor gsddmm_ve(const UnifiedGraph& g, const Tensor& Xv, const Tensor& We, SddmmOp op, SddmmSide side,
                   const ExecContext& ctx) const override {
    return kernels::gsddmm_ve(g, Xv, We, op, side, ctx);
  }
  Tensor e_shuffle(const UnifiedGraph& g, const Tensor& We, const ExecContext& ctx) const override {
    return kernels::e_shuffle(g, We, ctx);
  }
  Tensor edge_softmax(const UnifiedGraph& g, const Tensor& logits, const ExecContext& ctx) const override {
    return kernels::edge_softmax(g, logits, ctx);
  }
};

inline const KernelBackend& sparse_backend() {
  static const SparseBackend backend;
  return backend;
}

}  // namespace graphpy
