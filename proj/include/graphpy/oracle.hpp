#pragma once

// Naive dense references.  Nothing here includes or calls the kernels; the
// point is to have a second, independent route to every result.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "graphpy/error.hpp"
#include "graphpy/graph.hpp"
#include "graphpy/tensor.hpp"

namespace graphpy::oracle {

inline constexpr std::size_t kDensifyCap = 1024;

// |V| x |V| matrix, row-major.
struct DenseMatrix {
  std::size_t n = 0;
  std::vector<double> a;

  explicit DenseMatrix(std::size_t size = 0) : n(size), a(size * size, 0.0) {}
  double& operator()(std::size_t r, std::size_t c) { return a[r * n + c]; }
  double operator()(std::size_t r, std::size_t c) const { return a[r * n + c]; }

  DenseMatrix transposed() const {
    DenseMatrix t(n);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) t(c, r) = (*this)(r, c);
    return t;
  }
  bool is_symmetric() const { return transposed().a == a; }
};

// Slot index of every stored (r, c), -1 elsewhere.
struct SlotMap {
  std::size_t n = 0;
  std::vector<long long> slot;
  long long operator()(std::size_t r, std::size_t c) const { return slot[r * n + c]; }
};

inline SlotMap slot_map(const UnifiedGraph& g, std::size_t cap = kDensifyCap) {
  require(g.vcount() <= cap, ErrorCode::cap_exceeded,
          "densify limited to " + std::to_string(cap) + " vertices, graph has " + std::to_string(g.vcount()));
  SlotMap m{g.vcount(), std::vector<long long>(g.vcount() * g.vcount(), -1)};
  for (index_t r = 0; r < g.vcount(); ++r)
    for (index_t j = g.offsets()[r]; j < g.offsets()[r + 1]; ++j)
      m.slot[r * g.vcount() + g.col_ids()[j]] = static_cast<long long>(j);
  return m;
}

// M[r,c] = We[slot(r,c), head] (or 1.0 without weights), 0 elsewhere.
inline DenseMatrix densify(const UnifiedGraph& g, const Tensor* We = nullptr, std::size_t head = 0,
                           std::size_t cap = kDensifyCap) {
  const auto sm = slot_map(g, cap);
  DenseMatrix M(g.vcount());
  for (std::size_t i = 0; i < sm.slot.size(); ++i) {
    if (sm.slot[i] < 0) continue;
    M.a[i] = We ? (*We)[static_cast<std::size_t>(sm.slot[i]) * We->row_size() + head] : 1.0;
  }
  return M;
}

// M . X by the textbook triple loop.
inline Tensor dense_spmm(const DenseMatrix& M, const Tensor& X) {
  require(X.rows() == M.n, ErrorCode::shape, "dense_spmm: X rows must equal matrix size");
  const std::size_t K = X.row_size();
  Tensor out(X.shape());
  for (std::size_t r = 0; r < M.n; ++r)
    for (std::size_t c = 0; c < M.n; ++c) {
      const double m = M(r, c);
      if (m == 0.0) continue;
      for (std::size_t k = 0; k < K; ++k) out[r * K + k] += m * X[c * K + k];
    }
  return out;
}

inline Tensor dense_spmm_t(const DenseMatrix& M, const Tensor& X) { return dense_spmm(M.transposed(), X); }

namespace detail {

inline std::size_t heads_of(const Tensor& X, std::size_t heads) {
  require(heads >= 1 && X.row_size() % heads == 0, ErrorCode::shape, "row size not divisible by heads");
  return X.row_size() / heads;
}

// Per-head weighted product with matrix M_h = densify(We[:, h]).
inline Tensor per_head_spmm(const UnifiedGraph& g, const Tensor& We, const Tensor& X, bool transpose) {
  const std::size_t H = We.row_size();
  const std::size_t F = heads_of(X, H);
  Tensor out(X.shape());
  for (std::size_t h = 0; h < H; ++h) {
    auto M = densify(g, &We, h);
    if (transpose) M = M.transposed();
    for (std::size_t r = 0; r < M.n; ++r)
      for (std::size_t c = 0; c < M.n; ++c) {
        const double m = M(r, c);
        if (m == 0.0) continue;
        for (std::size_t f = 0; f < F; ++f) out[r * H * F + h * F + f] += m * X[c * H * F + h * F + f];
      }
  }
  return out;
}

}  // namespace detail

// Per-slot dot products <Xr[r,h,:], Xc[c,h,:]>, from the full dense product
// sampled at the stored positions.
inline Tensor dense_sddmm(const UnifiedGraph& g, const Tensor& Xr, const Tensor& Xc, std::size_t heads = 1) {
  require(Xr.rows() == g.vcount() && Xc.rows() == g.vcount(), ErrorCode::shape, "dense_sddmm: row mismatch");
  const std::size_t F = detail::heads_of(Xr, heads);
  const auto sm = slot_map(g);
  const std::size_t n = g.vcount();
  Tensor out({static_cast<std::size_t>(g.ecount()), heads});
  for (std::size_t h = 0; h < heads; ++h) {
    std::vector<double> P(n * n, 0.0);
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t c = 0; c < n; ++c) {
        double s = 0.0;
        for (std::size_t f = 0; f < F; ++f) s += Xr[r * heads * F + h * F + f] * Xc[c * heads * F + h * F + f];
        P[r * n + c] = s;
      }
    for (std::size_t i = 0; i < n * n; ++i)
      if (sm.slot[i] >= 0) out[static_cast<std::size_t>(sm.slot[i]) * heads + h] = P[i];
  }
  return out;
}

// Reference for gspmm_v: reduce over stored columns of each dense row.
inline Tensor dense_gspmm_v(const UnifiedGraph& g, const Tensor& X, int reduce /*0 sum, 1 min, 2 max*/, bool norm) {
  const auto M = densify(g);
  if (reduce == 0) {
    Tensor out = dense_spmm(M, X);
    if (norm) {
      const std::size_t K = X.row_size();
      for (std::size_t r = 0; r < M.n; ++r) {
        double d = 0.0;
        for (std::size_t c = 0; c < M.n; ++c) d += M(r, c);
        if (d == 0.0) d = 1.0;
        for (std::size_t k = 0; k < K; ++k) out[r * K + k] /= d;
      }
    }
    return out;
  }
  const std::size_t K = X.row_size();
  Tensor out(X.shape());
  for (std::size_t r = 0; r < M.n; ++r)
    for (std::size_t k = 0; k < K; ++k) {
      bool any = false;
      double best = 0.0;
      for (std::size_t c = 0; c < M.n; ++c) {
        if (M(r, c) == 0.0) continue;
        const double v = X[c * K + k];
        if (!any || (reduce == 2 ? v > best : v < best)) best = v;
        any = true;
      }
      out[r * K + k] = any ? best : 0.0;
    }
  return out;
}

inline Tensor dense_gspmm_ve(const UnifiedGraph& g, const Tensor& We, const Tensor& X) {
  return detail::per_head_spmm(g, We, X, false);
}

// Reference for gspmm_ve_t: the transpose of the weighted matrix.
inline Tensor dense_gspmm_ve_t(const UnifiedGraph& g, const Tensor& We, const Tensor& X) {
  return detail::per_head_spmm(g, We, X, true);
}

// Reference for gspmm_e: reduce the stored entries of each row of
// densify(We) (or of its transpose).
inline Tensor dense_gspmm_e(const UnifiedGraph& g, const Tensor& We, int reduce, bool transposed) {
  const std::size_t H = We.row_size();
  Tensor out({static_cast<std::size_t>(g.vcount()), H});
  const auto mask = densify(g);
  for (std::size_t h = 0; h < H; ++h) {
    auto M = densify(g, &We, h);
    if (transposed) M = M.transposed();
    for (std::size_t r = 0; r < M.n; ++r) {
      bool any = false;
      double acc = 0.0;
      for (std::size_t c = 0; c < M.n; ++c) {
        if (mask(r, c) == 0.0) continue;  // symmetric topology: same pattern as the transpose
        const double v = M(r, c);
        if (reduce == 0) acc += v;
        else if (!any || (reduce == 2 ? v > acc : v < acc)) acc = v;
        any = true;
      }
      out[r * H + h] = acc;
    }
  }
  return out;
}

// Reference for gsddmm_ve: walk every stored (r, c) of the dense pattern.
inline Tensor dense_gsddmm_ve(const UnifiedGraph& g, const Tensor& Xv, const Tensor& We, int op /*0 add 1 sub 2 mul 3 div*/,
                              bool col_side) {
  const auto sm = slot_map(g);
  const std::size_t H = We.row_size();
  Tensor out(We.shape());
  for (std::size_t r = 0; r < sm.n; ++r)
    for (std::size_t c = 0; c < sm.n; ++c) {
      const long long j = sm(r, c);
      if (j < 0) continue;
      const std::size_t v = col_side ? c : r;
      for (std::size_t h = 0; h < H; ++h) {
        const double w = We[static_cast<std::size_t>(j) * H + h];
        const double x = Xv[v * H + h];
        double y = 0.0;
        switch (op) {
          case 0: y = w + x; break;
          case 1: y = w - x; break;
          case 2: y = w * x; break;
          default: y = w / x; break;
        }
        out[static_cast<std::size_t>(j) * H + h] = y;
      }
    }
  return out;
}

// Reference for e_shuffle: read the transposed weighted matrix back in slot
// order.
inline Tensor dense_e_shuffle(const UnifiedGraph& g, const Tensor& We) {
  const auto sm = slot_map(g);
  const std::size_t H = We.row_size();
  Tensor out(We.shape());
  for (std::size_t h = 0; h < H; ++h) {
    const auto Mt = densify(g, &We, h).transposed();
    for (std::size_t r = 0; r < sm.n; ++r)
      for (std::size_t c = 0; c < sm.n; ++c)
        if (sm(r, c) >= 0) out[static_cast<std::size_t>(sm(r, c)) * H + h] = Mt(r, c);
  }
  return out;
}

// Reference for edge_softmax: softmax over the stored entries of each dense row.
inline Tensor dense_edge_softmax(const UnifiedGraph& g, const Tensor& logits) {
  const auto sm = slot_map(g);
  const std::size_t H = logits.row_size();
  Tensor out(logits.shape());
  for (std::size_t h = 0; h < H; ++h)
    for (std::size_t r = 0; r < sm.n; ++r) {
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < sm.n; ++c)
        if (sm(r, c) >= 0) mx = std::max(mx, logits[static_cast<std::size_t>(sm(r, c)) * H + h]);
      double s = 0.0;
      for (std::size_t c = 0; c < sm.n; ++c)
        if (sm(r, c) >= 0) s += std::exp(logits[static_cast<std::size_t>(sm(r, c)) * H + h] - mx);
      for (std::size_t c = 0; c < sm.n; ++c)
        if (sm(r, c) >= 0) {
          const auto j = static_cast<std::size_t>(sm(r, c)) * H + h;
          out[j] = std::exp(logits[j] - mx) / s;
        }
    }
  return out;
}

// ---------------------------------------------------------------------------
// Finite differences and comparison

// Central differences with step 1e-6 * max(1, |x_i|) (scaled by `scale`).
inline Tensor finite_diff(const std::function<double(const Tensor&)>& f, const Tensor& x, double scale = 1e-6) {
  Tensor grad(x.shape());
  Tensor probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double h = scale * std::max(1.0, std::abs(x[i]));
    probe[i] = x[i] + h;
    const double fp = f(probe);
    probe[i] = x[i] - h;
    const double fm = f(probe);
    probe[i] = x[i];
    grad[i] = (fp - fm) / (2.0 * h);
  }
  return grad;
}

// ||a - b||_2 / max(||a||_2, ||b||_2), 0 when both vanish.
inline double relative_error(const Tensor& a, const Tensor& b) {
  require(a.size() == b.size(), ErrorCode::shape, "relative_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  if (denom == 0.0) return std::sqrt(diff);
  if (std::isnan(diff)) return std::numeric_limits<double>::infinity();
  return std::sqrt(diff) / denom;
}

// Relative error for gradient checks.  The denominator never drops below
// `floor`, so two gradients that are both zero up to round-off compare equal.
inline double grad_rel_error(const Tensor& analytic, const Tensor& numeric, double floor = 1e-8) {
  require(analytic.size() == numeric.size(), ErrorCode::shape, "grad_rel_error: size mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nb += numeric[i] * numeric[i];
  }
  if (std::isnan(diff)) return std::numeric_limits<double>::infinity();
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), floor});
}

struct CloseReport {
  bool pass = true;
  double max_abs_err = 0.0;
  std::optional<std::size_t> worst_index;  // first element violating the tolerance
  std::string message;
};

// Elementwise |a - b| <= atol + rtol * |b|.  NaN anywhere fails.
inline CloseReport check_close(const Tensor& a, const Tensor& b, double rtol, double atol) {
  CloseReport rep;
  if (a.size() != b.size()) {
    rep.pass = false;
    rep.message = "size mismatch " + a.shape_string() + " vs " + b.shape_string();
    return rep;
  }
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double err = std::abs(a[i] - b[i]);
    const bool bad = std::isnan(a[i]) || std::isnan(b[i]) || !(err <= atol + rtol * std::abs(b[i]));
    if (std::isnan(err) || err > rep.max_abs_err) rep.max_abs_err = err;
    if (bad && rep.pass) {
      rep.pass = false;
      rep.worst_index = i;
      rep.message = "mismatch at index " + std::to_string(i) + ": " + std::to_string(a[i]) + " vs " + std::to_string(b[i]);
    }
  }
  return rep;
}

}  // namespace graphpy::oracle
