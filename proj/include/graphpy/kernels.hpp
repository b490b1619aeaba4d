#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "graphpy/error.hpp"
#include "graphpy/graph.hpp"
#include "graphpy/ledger.hpp"
#include "graphpy/tensor.hpp"
#include "graphpy/timing.hpp"

namespace graphpy {

enum class ReduceOp { sum, min, max };
enum class SddmmOp { add, sub, mul, div };
enum class SddmmSide { row, col };

// Optional per-session hooks threaded through every kernel.
struct ExecContext {
  MemoryLedger* ledger = nullptr;
  KernelClock* clock = nullptr;
  std::size_t sddmm_chunk = 32;
};

// All kernels accumulate each output row sequentially in ascending CSR slot
// order, so results are bitwise reproducible and the composition identities
// (e.g. gspmm_ve_t == gspmm_ve after e_shuffle) hold exactly.  Reductions over
// an empty row produce 0.  Division follows IEEE semantics; divisors are not
// checked.

namespace kernels {

namespace detail {

template <typename T>
void check_vertex_tensor(const UnifiedGraph& g, const DenseTensor<T>& X, const char* name) {
  require(X.rows() == g.vcount(), ErrorCode::shape,
          std::string(name) + " has " + std::to_string(X.rows()) + " rows, graph has " +
              std::to_string(g.vcount()) + " vertices");
}

template <typename T>
void check_edge_tensor(const UnifiedGraph& g, const DenseTensor<T>& W, const char* name) {
  require(W.rows() == g.ecount(), ErrorCode::shape,
          std::string(name) + " has " + std::to_string(W.rows()) + " rows, graph has " +
              std::to_string(g.ecount()) + " edges");
  require(W.rank() <= 2, ErrorCode::shape, std::string(name) + " must be [|E|, H]");
}

// Feature length per head when a vertex tensor is read with `heads` heads.
template <typename T>
std::size_t features_per_head(const DenseTensor<T>& X, std::size_t heads) {
  if (X.rank() == 3)
    require(X.dim(1) == heads, ErrorCode::shape,
            "head count mismatch: tensor has " + std::to_string(X.dim(1)) + ", edge tensor " + std::to_string(heads));
  require(X.row_size() % heads == 0, ErrorCode::shape,
          "row size " + std::to_string(X.row_size()) + " is not divisible by " + std::to_string(heads) + " heads");
  return X.row_size() / heads;
}

inline void require_edge_ids(const UnifiedGraph& g, const char* op) {
  require(g.has_edge_ids(), ErrorCode::missing_edge_ids,
          std::string(op) + " needs a graph built with edge ids (csc_eid)");
}

template <typename T, bool Transposed>
DenseTensor<T> spmm_ve_impl(const UnifiedGraph& g, const DenseTensor<T>& We, const DenseTensor<T>& X,
                            const ExecContext& ctx) {
  ScopedKernelTimer timer(ctx.clock);
  check_edge_tensor(g, We, "We");
  check_vertex_tensor(g, X, "X");
  const std::size_t H = We.row_size();
  const std::size_t F = features_per_head(X, H);
  DenseTensor<T> out(X.shape());
  const auto offsets = g.offsets();
  const auto cols = g.col_ids();
  const auto eid = g.csc_eid();
  const T* w = We.data();
  const T* x = X.data();
  T* y = out.data();
  const std::size_t rs = H * F;
  for (index_t r = 0; r < g.vcount(); ++r) {
    T* acc = y + r * rs;
    for (index_t j = offsets[r]; j < offsets[r + 1]; ++j) {
      const index_t e = Transposed ? eid[j] : j;
      const T* xr = x + cols[j] * rs;
      const T* wr = w + e * H;
      for (std::size_t h = 0; h < H; ++h) {
        const T wh = wr[h];
        for (std::size_t f = 0; f < F; ++f) acc[h * F + f] += wh * xr[h * F + f];
      }
    }
  }
  return out;
}

}  // namespace detail

// Unweighted aggregation out[r] = reduce_{c in N(r)} X[c].  With
// `norm_by_degree` (sum only) each row is divided by its clamped degree in
// the same pass.
template <typename T>
DenseTensor<T> gspmm_v(const UnifiedGraph& g, const DenseTensor<T>& X, ReduceOp reduce = ReduceOp::sum,
                       bool norm_by_degree = false, const ExecContext& ctx = {}) {
  ScopedKernelTimer timer(ctx.clock);
  detail::check_vertex_tensor(g, X, "X");
  require(!norm_by_degree || reduce == ReduceOp::sum, ErrorCode::bad_argument,
          "degree normalization is only defined for sum");
  DenseTensor<T> out(X.shape());
  const std::size_t K = X.row_size();
  const auto offsets = g.offsets();
  const auto cols = g.col_ids();
  const auto dc = g.deg_clamped();
  const T* x = X.data();
  T* y = out.data();
  for (index_t r = 0; r < g.vcount(); ++r) {
    T* acc = y + r * K;
    const index_t b = offsets[r], e = offsets[r + 1];
    if (reduce == ReduceOp::sum) {
      for (index_t j = b; j < e; ++j) {
        const T* xr = x + cols[j] * K;
        for (std::size_t k = 0; k < K; ++k) acc[k] += xr[k];
      }
      if (norm_by_degree) {
        const T d = static_cast<T>(dc[r]);
        for (std::size_t k = 0; k < K; ++k) acc[k] /= d;
      }
    } else if (b < e) {
      std::copy_n(x + cols[b] * K, K, acc);
      for (index_t j = b + 1; j < e; ++j) {
        const T* xr = x + cols[j] * K;
        for (std::size_t k = 0; k < K; ++k)
          acc[k] = reduce == ReduceOp::max ? std::max(acc[k], xr[k]) : std::min(acc[k], xr[k]);
      }
    }
  }
  return out;
}

// X[r] /= deg_clamped[r], in place.
template <typename T>
void norm_by_degree_inplace(const UnifiedGraph& g, DenseTensor<T>& X, const ExecContext& ctx = {}) {
  ScopedKernelTimer timer(ctx.clock);
  detail::check_vertex_tensor(g, X, "X");
  const std::size_t K = X.row_size();
  const auto dc = g.deg_clamped();
  T* x = X.data();
  for (index_t r = 0; r < g.vcount(); ++r) {
    const T d = static_cast<T>(dc[r]);
    for (std::size_t k = 0; k < K; ++k) x[r * K + k] /= d;
  }
}

// Weighted aggregation out[r,h,:] = sum_{slots j of r} We[j,h] * X[col_j,h,:].
// X may be [|V|,H,F] or [|V|,H*F].
template <typename T>
DenseTensor<T> gspmm_ve(const UnifiedGraph& g, const DenseTensor<T>& We, const DenseTensor<T>& X,
                        const ExecContext& ctx = {}) {
  return detail::spmm_ve_impl<T, false>(g, We, X, ctx);
}

// Aggregation against the transposed matrix: same traversal as gspmm_ve,
// with edge values fetched through csc_eid.
template <typename T>
DenseTensor<T> gspmm_ve_t(const UnifiedGraph& g, const DenseTensor<T>& We, const DenseTensor<T>& X,
                          const ExecContext& ctx = {}) {
  detail::require_edge_ids(g, "gspmm_ve_t");
  return detail::spmm_ve_impl<T, true>(g, We, X, ctx);
}

// Edge-only reduction out[r,h] = reduce_{slots j of r} We[j,h] (or
// We[csc_eid[j],h] when transposed).
template <typename T>
DenseTensor<T> gspmm_e(const UnifiedGraph& g, const DenseTensor<T>& We, ReduceOp reduce = ReduceOp::sum,
                       bool transposed = false, const ExecContext& ctx = {}) {
  ScopedKernelTimer timer(ctx.clock);
  detail::check_edge_tensor(g, We, "We");
  if (transposed) detail::require_edge_ids(g, "transposed gspmm_e");
  const std::size_t H = We.row_size();
  DenseTensor<T> out({static_cast<std::size_t>(g.vcount()), H});
  const auto offsets = g.offsets();
  const auto eid = g.csc_eid();
  const T* w = We.data();
  T* y = out.data();
  for (index_t r = 0; r < g.vcount(); ++r) {
    T* acc = y + r * H;
    const index_t b = offsets[r], e = offsets[r + 1];
    for (index_t j = b; j < e; ++j) {
      const T* wr = w + (transposed ? eid[j] : j) * H;
      for (std::size_t h = 0; h < H; ++h) {
        if (reduce == ReduceOp::sum || j == b)
          acc[h] = reduce == ReduceOp::sum ? acc[h] + wr[h] : wr[h];
        else
          acc[h] = reduce == ReduceOp::max ? std::max(acc[h], wr[h]) : std::min(acc[h], wr[h]);
      }
    }
  }
  return out;
}

// out[j,h] = <Xr[row_j,h,:], Xc[col_j,h,:]>.  The CSR-ordered COO array is
// split into fixed-size chunks; inside a chunk each row's features are
// fetched once and reused for all of that row's edges.
template <typename T>
DenseTensor<T> gsddmm_vv(const UnifiedGraph& g, const DenseTensor<T>& Xr, const DenseTensor<T>& Xc,
                         std::size_t heads = 0, const ExecContext& ctx = {}) {
  ScopedKernelTimer timer(ctx.clock);
  detail::check_vertex_tensor(g, Xr, "Xr");
  detail::check_vertex_tensor(g, Xc, "Xc");
  require(Xr.row_size() == Xc.row_size(), ErrorCode::shape, "Xr and Xc row sizes differ");
  if (heads == 0) heads = Xr.rank() == 3 ? Xr.dim(1) : 1;
  const std::size_t F = detail::features_per_head(Xr, heads);
  detail::features_per_head(Xc, heads);
  require(ctx.sddmm_chunk >= 1, ErrorCode::bad_argument, "chunk size must be >= 1");
  const std::size_t H = heads, rs = H * F;
  require(g.ecount() > 0, ErrorCode::shape, "gsddmm_vv needs at least one edge");
  DenseTensor<T> out({static_cast<std::size_t>(g.ecount()), H});
  const auto rows = g.coo_rows();
  const auto cols = g.col_ids();
  std::vector<T> row_cache(rs);
  const T* xr = Xr.data();
  const T* xc = Xc.data();
  T* y = out.data();
  const index_t E = g.ecount();
  for (index_t start = 0; start < E; start += ctx.sddmm_chunk) {
    const index_t stop = std::min<index_t>(E, start + ctx.sddmm_chunk);
    index_t cached = rows[start];
    std::copy_n(xr + cached * rs, rs, row_cache.data());
    for (index_t j = start; j < stop; ++j) {
      if (rows[j] != cached) {
        cached = rows[j];
        std::copy_n(xr + cached * rs, rs, row_cache.data());
      }
      const T* c = xc + cols[j] * rs;
      for (std::size_t h = 0; h < H; ++h) {
        T acc = T(0);
        for (std::size_t f = 0; f < F; ++f) acc += row_cache[h * F + f] * c[h * F + f];
        y[j * H + h] = acc;
      }
    }
  }
  return out;
}

template <typename T>
T apply_sddmm_op(SddmmOp op, T w, T x) {
  switch (op) {
    case SddmmOp::add: return w + x;
    case SddmmOp::sub: return w - x;
    case SddmmOp::mul: return w * x;
    case SddmmOp::div: return w / x;
  }
  return w;
}

// out[j,h] = We[j,h] OP Xv[v,h] with v = row_j or col_j.
template <typename T>
DenseTensor<T> gsddmm_ve(const UnifiedGraph& g, const DenseTensor<T>& Xv, const DenseTensor<T>& We, SddmmOp op,
                         SddmmSide side = SddmmSide::row, const ExecContext& ctx = {}) {
  ScopedKernelTimer timer(ctx.clock);
  detail::check_vertex_tensor(g, Xv, "Xv");
  detail::check_edge_tensor(g, We, "We");
  const std::size_t H = We.row_size();
  require(Xv.row_size() == H, ErrorCode::shape, "Xv must be [|V|, H] matching We");
  DenseTensor<T> out(We.shape());
  const auto idx = side == SddmmSide::row ? g.coo_rows() : g.col_ids();
  const T* w = We.data();
  const T* x = Xv.data();
  T* y = out.data();
  for (index_t j = 0; j < g.ecount(); ++j) {
    const T* xv = x + idx[j] * H;
    for (std::size_t h = 0; h < H; ++h) y[j * H + h] = apply_sddmm_op(op, w[j * H + h], xv[h]);
  }
  return out;
}

// Permutes an edge tensor through csc_eid: out[j] = We[csc_eid[j]].  The
// returned |E|*H buffer is recorded as shuffle_intermediate; the caller
// records the release.
template <typename T>
DenseTensor<T> e_shuffle(const UnifiedGraph& g, const DenseTensor<T>& We, const ExecContext& ctx = {}) {
  ScopedKernelTimer timer(ctx.clock);
  detail::require_edge_ids(g, "e_shuffle");
  detail::check_edge_tensor(g, We, "We");
  const std::size_t H = We.row_size();
  DenseTensor<T> out(We.shape());
  if (ctx.ledger) ctx.ledger->record(MemCategory::shuffle_intermediate, static_cast<std::int64_t>(out.size()));
  const auto eid = g.csc_eid();
  for (index_t j = 0; j < g.ecount(); ++j) std::copy_n(We.data() + eid[j] * H, H, out.data() + j * H);
  return out;
}

// Row-wise softmax over each vertex's incident slots, stabilized by the
// per-row maximum.  Composed from the primitives above.
template <typename T>
DenseTensor<T> edge_softmax(const UnifiedGraph& g, const DenseTensor<T>& logits, const ExecContext& ctx = {}) {
  ScopedKernelTimer timer(ctx.clock);
  detail::check_edge_tensor(g, logits, "logits");
  const auto row_max = gspmm_e(g, logits, ReduceOp::max, false, ctx);
  auto shifted = gsddmm_ve(g, row_max, logits, SddmmOp::sub, SddmmSide::row, ctx);
  for (auto& v : shifted.values()) v = std::exp(v);
  const auto row_sum = gspmm_e(g, shifted, ReduceOp::sum, false, ctx);
  return gsddmm_ve(g, row_sum, shifted, SddmmOp::div, SddmmSide::row, ctx);
}

}  // namespace kernels

using kernels::e_shuffle;
using kernels::edge_softmax;
using kernels::gsddmm_ve;
using kernels::gsddmm_vv;
using kernels::gspmm_e;
using kernels::gspmm_v;
using kernels::gspmm_ve;
using kernels::gspmm_ve_t;
using kernels::norm_by_degree_inplace;

}  // namespace graphpy
