#pragma once

#include "graphpy/backend.hpp"
#include "graphpy/oracle.hpp"

namespace graphpy::oracle {

// Runs every graph op through the dense references.  Used as the twin of
// the sparse path in training-equivalence checks; O(|V|^2) per call.
class DenseOracleBackend final : public KernelBackend {
 public:
  Tensor gspmm_v(const UnifiedGraph& g, const Tensor& X, bool norm, const ExecContext&) const override {
    return dense_gspmm_v(g, X, 0, norm);
  }
  void norm_by_degree_inplace(const UnifiedGraph& g, Tensor& X, const ExecContext&) const override {
    const auto M = densify(g);
    const std::size_t K = X.row_size();
    for (std::size_t r = 0; r < M.n; ++r) {
      double d = 0.0;
      for (std::size_t c = 0; c < M.n; ++c) d += M(r, c);
      if (d == 0.0) d = 1.0;
      for (std::size_t k = 0; k < K; ++k) X[r * K + k] /= d;
    }
  }
  Tensor gspmm_ve(const UnifiedGraph& g, const Tensor& We, const Tensor& X, const ExecContext&) const override {
    return dense_gspmm_ve(g, We, X);
  }
  Tensor gspmm_ve_t(const UnifiedGraph& g, const Tensor& We, const Tensor& X, const ExecContext&) const override {
    return dense_gspmm_ve_t(g, We, X);
  }
  Tensor gspmm_e(const UnifiedGraph& g, const Tensor& We, ReduceOp reduce, bool transposed,
                 const ExecContext&) const override {
    return dense_gspmm_e(g, We, reduce_code(reduce), transposed);
  }
  Tensor gsddmm_vv(const UnifiedGraph& g, const Tensor& Xr, const Tensor& Xc, std::size_t heads,
                   const ExecContext&) const override {
    return dense_sddmm(g, Xr, Xc, heads == 0 ? 1 : heads);
  }
  Tensor gsddmm_ve(const UnifiedGraph& g, const Tensor& Xv, const Tensor& We, SddmmOp op, SddmmSide side,
                   const ExecContext&) const override {
    return dense_gsddmm_ve(g, Xv, We, static_cast<int>(op), side == SddmmSide::col);
  }
  Tensor e_shuffle(const UnifiedGraph& g, const Tensor& We, const ExecContext& ctx) const override {
    auto out = dense_e_shuffle(g, We);
    if (ctx.ledger) ctx.ledger->record(MemCategory::shuffle_intermediate, static_cast<std::int64_t>(out.size()));
    return out;
  }
  Tensor edge_softmax(const UnifiedGraph& g, const Tensor& logits, const ExecContext&) const override {
    return dense_edge_softmax(g, logits);
  }

  static int reduce_code(ReduceOp r) { return r == ReduceOp::sum ? 0 : r == ReduceOp::min ? 1 : 2; }
};

}  // namespace graphpy::oracle
