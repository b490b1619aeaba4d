#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <string>
#include <unordered_set>
#include <vector>

#include "graphpy/edge_list.hpp"
#include "graphpy/error.hpp"
#include "graphpy/graph.hpp"
#include "graphpy/tensor.hpp"

namespace graphpy {

// ---------------------------------------------------------------------------
// Synthetic graphs

// Four vertices, undirected edges {0-1, 0-2, 1-2, 2-3}.
inline EdgeList t4_edges() {
  EdgeList e;
  e.add_edge(0, 1);
  e.add_edge(0, 2);
  e.add_edge(1, 2);
  e.add_edge(2, 3);
  return e;
}

// Cycle 0-1-...-(n-1)-0; every vertex has degree 2 once symmetrized.
inline EdgeList ring_edges(std::uint64_t n) {
  EdgeList e;
  for (std::uint64_t i = 0; i < n; ++i) e.add_edge(i, (i + 1) % n);
  return e;
}

// Uniform random graph with exactly `slots / 2` distinct undirected edges
// (no self-loops), i.e. `slots` stored edges after symmetrization.
inline EdgeList erdos_renyi_edges(std::uint64_t vcount, std::uint64_t slots, std::uint64_t seed) {
  const std::uint64_t pairs = slots / 2;
  require(vcount >= 2 && pairs <= vcount * (vcount - 1) / 2, ErrorCode::bad_argument,
          "too many edges for " + std::to_string(vcount) + " vertices");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::uint64_t> pick(0, vcount - 1);
  std::unordered_set<std::uint64_t> seen;
  seen.reserve(pairs * 2);
  EdgeList e;
  while (e.count() < pairs) {
    auto u = pick(rng), v = pick(rng);
    if (u == v) continue;
    if (u > v) std::swap(u, v);
    if (!seen.insert(u * vcount + v).second) continue;
    e.add_edge(u, v);
  }
  e.set_vcount_hint(vcount);
  return e;
}

struct SbmGraph {
  EdgeList edges;
  std::vector<std::int64_t> block;
};

// Stochastic block model: vertices split into `blocks` contiguous groups;
// each unordered pair is linked with p_in inside a group, p_out across.
inline SbmGraph sbm_edges(std::uint64_t n, std::uint64_t blocks, double p_in, double p_out, std::uint64_t seed) {
  require(blocks >= 1 && n >= blocks, ErrorCode::bad_argument, "need at least one vertex per block");
  require(p_in >= 0 && p_in <= 1 && p_out >= 0 && p_out <= 1, ErrorCode::bad_argument, "probabilities in [0,1]");
  SbmGraph out;
  out.block.resize(n);
  for (std::uint64_t v = 0; v < n; ++v) out.block[v] = static_cast<std::int64_t>(v * blocks / n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  for (std::uint64_t a = 0; a < n; ++a)
    for (std::uint64_t b = a + 1; b < n; ++b) {
      const double p = out.block[a] == out.block[b] ? p_in : p_out;
      if (u01(rng) < p) out.edges.add_edge(a, b);
    }
  out.edges.set_vcount_hint(n);
  return out;
}

// ---------------------------------------------------------------------------
// Node-classification datasets

struct NodeDataset {
  UnifiedGraph graph;
  Tensor features;
  std::vector<std::int64_t> labels;
  std::vector<bool> train_mask, val_mask, test_mask;
  std::int64_t num_classes = 0;

  // Checks shapes and label range; returns true when masks overlap.
  bool validate() const {
    const auto n = graph.vcount();
    require(features.rows() == n, ErrorCode::shape, "features must have one row per vertex");
    require(labels.size() == n, ErrorCode::shape, "labels must have one entry per vertex");
    require(train_mask.size() == n && val_mask.size() == n && test_mask.size() == n, ErrorCode::shape,
            "masks must have one entry per vertex");
    require(num_classes >= 1, ErrorCode::bad_argument, "num_classes must be positive");
    bool overlap = false;
    for (std::size_t v = 0; v < n; ++v) {
      require(labels[v] >= 0 && labels[v] < num_classes, ErrorCode::bad_argument,
              "label out of range at vertex " + std::to_string(v));
      const int k = int(train_mask[v]) + int(val_mask[v]) + int(test_mask[v]);
      overlap = overlap || k > 1;
    }
    return overlap;
  }
};

// Random 60/20/20 train/val/test split.
inline void random_split(NodeDataset& d, std::uint64_t seed, double train = 0.6, double val = 0.2) {
  const std::size_t n = d.graph.vcount();
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed ^ 0x5bd1e995ull);
  std::shuffle(perm.begin(), perm.end(), rng);
  d.train_mask.assign(n, false);
  d.val_mask.assign(n, false);
  d.test_mask.assign(n, false);
  const auto ntrain = static_cast<std::size_t>(train * static_cast<double>(n));
  const auto nval = static_cast<std::size_t>(val * static_cast<double>(n));
  for (std::size_t i = 0; i < n; ++i) {
    if (i < ntrain) d.train_mask[perm[i]] = true;
    else if (i < ntrain + nval) d.val_mask[perm[i]] = true;
    else d.test_mask[perm[i]] = true;
  }
}

struct SbmDatasetConfig {
  std::uint64_t vertices = 200;
  std::uint64_t classes = 2;
  double p_in = 0.1;
  double p_out = 0.01;
  std::size_t feature_dim = 8;
  double noise = 1.0;
  std::uint64_t seed = 7;
};

// SBM graph whose labels are the blocks; features are a one-hot block
// indicator plus Gaussian noise on every coordinate.
inline NodeDataset make_sbm_dataset(const SbmDatasetConfig& cfg = {}) {
  require(cfg.feature_dim >= cfg.classes, ErrorCode::bad_argument, "feature_dim must be >= classes");
  auto sbm = sbm_edges(cfg.vertices, cfg.classes, cfg.p_in, cfg.p_out, cfg.seed);
  NodeDataset d;
  d.graph = build_graph(sbm.edges, cfg.vertices, {.symmetrize = true, .need_edge_ids = true});
  d.labels = sbm.block;
  d.num_classes = static_cast<std::int64_t>(cfg.classes);
  d.features = Tensor({static_cast<std::size_t>(cfg.vertices), cfg.feature_dim});
  std::mt19937_64 rng(cfg.seed + 1);
  std::normal_distribution<double> noise(0.0, cfg.noise);
  for (std::size_t v = 0; v < cfg.vertices; ++v)
    for (std::size_t k = 0; k < cfg.feature_dim; ++k)
      d.features(v, k) = (static_cast<std::int64_t>(k) == d.labels[v] ? 1.0 : 0.0) + noise(rng);
  random_split(d, cfg.seed);
  return d;
}

// ---------------------------------------------------------------------------
// Sidecar files: features are little-endian float32 with a (rows u32, cols
// u32) header; labels and masks are one integer per line.

inline void save_features(const Tensor& x, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  auto put32 = [&](std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    out.write(reinterpret_cast<const char*>(b), 4);
  };
  put32(static_cast<std::uint32_t>(x.rows()));
  put32(static_cast<std::uint32_t>(x.row_size()));
  for (double v : x.values()) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put32(bits);
  }
  if (!out) fail(ErrorCode::io, "write to '" + path + "' failed");
}

inline Tensor load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  auto get32 = [&](const char* what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (in.gcount() != 4) fail(ErrorCode::truncated, std::string("features file ends inside ") + what);
    return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 | std::uint32_t(b[3]) << 24;
  };
  const auto rows = get32("header"), cols = get32("header");
  require(rows >= 1 && cols >= 1, ErrorCode::corrupt, "features header has a zero dimension");
  Tensor x({rows, cols});
  for (auto& v : x.values()) {
    const auto bits = get32("data");
    float f;
    std::memcpy(&f, &bits, 4);
    v = f;
  }
  return x;
}

inline void save_ints(const std::vector<std::int64_t>& v, const std::string& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  for (auto x : v) out << x << '\n';
}

inline std::vector<std::int64_t> load_ints(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  std::vector<std::int64_t> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto a = line.find_first_not_of(" \t");
    const auto b = line.find_last_not_of(" \t");
    std::int64_t v = 0;
    auto [p, ec] = std::from_chars(line.data() + a, line.data() + b + 1, v);
    if (ec != std::errc() || p != line.data() + b + 1) throw ParseError(lineno, "expected an integer in '" + path + "'");
    out.push_back(v);
  }
  return out;
}

inline std::vector<bool> to_mask(const std::vector<std::int64_t>& v) {
  std::vector<bool> m(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i] != 0;
  return m;
}

inline std::vector<std::int64_t> from_mask(const std::vector<bool>& m) {
  return {m.begin(), m.end()};
}

}  // namespace graphpy
