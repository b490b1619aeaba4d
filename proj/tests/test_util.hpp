#pragma once

#include <random>
#include <set>
#include <utility>

#include "graphpy/dataset.hpp"
#include "graphpy/graph.hpp"
#include "graphpy/tensor.hpp"

namespace graphpy::testing {

inline UnifiedGraph t4(bool edge_ids = true) {
  return build_graph(t4_edges(), 4, {.symmetrize = true, .need_edge_ids = edge_ids});
}

// Random undirected graph on up to `max_v` vertices, optionally with
// self-loops and isolated vertices; symmetrized with edge ids.
inline UnifiedGraph random_symmetric_graph(std::mt19937_64& rng, std::size_t max_v = 32, bool self_loops = true) {
  std::uniform_int_distribution<std::size_t> nv(1, max_v);
  const std::size_t n = nv(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double p = u(rng) * 0.5;
  EdgeList e;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a; b < n; ++b) {
      if (a == b && !self_loops) continue;
      if (u(rng) < p) e.add_edge(a, b);
    }
  if (e.count() == 0) e.add_edge(0, n - 1);
  return build_graph(e, n, {.symmetrize = true, .need_edge_ids = true});
}

inline Tensor random_tensor(std::vector<std::size_t> shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.values()) v = u(rng);
  return t;
}

inline Tensor iota_column(std::size_t n) {
  Tensor t({n, 1});
  for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i);
  return t;
}

}  // namespace graphpy::testing
