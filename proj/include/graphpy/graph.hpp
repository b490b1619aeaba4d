#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "graphpy/edge_list.hpp"
#include "graphpy/error.hpp"

namespace graphpy {

using index_t = std::uint64_t;

struct BuildOptions {
  bool symmetrize = false;
  bool need_edge_ids = false;
  bool sort_neighbors = true;
};

// One topology serving CSR, CSC (by symmetry) and a CSR-ordered COO.
// 
// Edge IDs are implicit for CSR/COO: the edge at CSR slot j has ID j, so
// edge-level tensors are indexed by slot.  Only the transposed view needs an
// explicit array: `csc_eid()[j]` is the slot of the reverse edge (c->r) of
// the edge (r->c) stored at slot j.
class UnifiedGraph {
 public:
  UnifiedGraph() : offsets_{0} {}

  // Validates every structural invariant; used by the builder and loader.
  static UnifiedGraph from_arrays(index_t vcount, std::vector<index_t> offsets, std::vector<index_t> col_ids,
                                  std::vector<index_t> coo_rows, std::optional<std::vector<index_t>> csc_eid) {
    UnifiedGraph g;
    g.vcount_ = vcount;
    g.offsets_ = std::move(offsets);
    g.col_ids_ = std::move(col_ids);
    g.coo_rows_ = std::move(coo_rows);
    g.ecount_ = g.col_ids_.size();
    g.validate();
    if (csc_eid) {
      g.csc_eid_ = std::move(*csc_eid);
      g.has_edge_ids_ = true;
      g.validate_edge_ids();
    }
    g.symmetric_ = g.has_edge_ids_ || g.compute_symmetry();
    g.deg_.resize(vcount);
    g.deg_clamped_.resize(vcount);
    for (index_t v = 0; v < vcount; ++v) {
      g.deg_[v] = g.offsets_[v + 1] - g.offsets_[v];
      g.deg_clamped_[v] = g.deg_[v] == 0 ? 1.0 : static_cast<double>(g.deg_[v]);
    }
    return g;
  }

  index_t vcount() const noexcept { return vcount_; }
  index_t ecount() const noexcept { return ecount_; }
  std::span<const index_t> offsets() const noexcept { return offsets_; }
  std::span<const index_t> col_ids() const noexcept { return col_ids_; }
  std::span<const index_t> coo_rows() const noexcept { return coo_rows_; }
  std::span<const index_t> csc_eid() const noexcept { return csc_eid_; }
  std::span<const index_t> deg() const noexcept { return deg_; }
  std::span<const double> deg_clamped() const noexcept { return deg_clamped_; }
  bool has_edge_ids() const noexcept { return has_edge_ids_; }
  bool is_symmetric() const noexcept { return symmetric_; }

  index_t row_begin(index_t r) const { return offsets_[r]; }
  index_t row_end(index_t r) const { return offsets_[r + 1]; }

  // Payload bytes of each stored edge in CSR order (empty for two-field schemas).
  std::span<const std::byte> payload() const noexcept { return payload_; }
  std::size_t payload_width() const noexcept { return payload_width_; }

  // Elements held by the persisted arrays: offsets, col_ids, coo_rows and
  // csc_eid when present.
  std::size_t storage_elements() const noexcept {
    return offsets_.size() + col_ids_.size() + coo_rows_.size() + csc_eid_.size();
  }

  // Slot of edge (r -> c), if stored.
  std::optional<index_t> find_slot(index_t r, index_t c) const {
    if (r >= vcount_) return std::nullopt;
    auto first = col_ids_.begin() + static_cast<std::ptrdiff_t>(offsets_[r]);
    auto last = col_ids_.begin() + static_cast<std::ptrdiff_t>(offsets_[r + 1]);
    if (sorted_) {
      auto it = std::lower_bound(first, last, c);
      if (it != last && *it == c) return static_cast<index_t>(it - col_ids_.begin());
      return std::nullopt;
    }
    auto it = std::find(first, last, c);
    if (it != last) return static_cast<index_t>(it - col_ids_.begin());
    return std::nullopt;
  }

  // Topology equality over the persisted fields.
  friend bool operator==(const UnifiedGraph& a, const UnifiedGraph& b) {
    return a.vcount_ == b.vcount_ && a.ecount_ == b.ecount_ && a.offsets_ == b.offsets_ &&
           a.col_ids_ == b.col_ids_ && a.coo_rows_ == b.coo_rows_ && a.has_edge_ids_ == b.has_edge_ids_ &&
           a.csc_eid_ == b.csc_eid_ && a.deg_ == b.deg_ && a.deg_clamped_ == b.deg_clamped_;
  }

 private:
  friend UnifiedGraph build_graph(const EdgeList&, index_t, const BuildOptions&);

  void validate() {
    require(offsets_.size() == vcount_ + 1, ErrorCode::corrupt, "offsets length must be |V|+1");
    require(offsets_.front() == 0 && offsets_.back() == ecount_, ErrorCode::corrupt,
            "offsets must start at 0 and end at |E|");
    require(coo_rows_.size() == ecount_, ErrorCode::corrupt, "coo_rows length must be |E|");
    sorted_ = true;
    for (index_t r = 0; r < vcount_; ++r) {
      require(offsets_[r] <= offsets_[r + 1], ErrorCode::corrupt, "offsets must be non-decreasing");
      for (index_t j = offsets_[r]; j < offsets_[r + 1]; ++j) {
        require(col_ids_[j] < vcount_, ErrorCode::corrupt, "column id out of range");
        require(coo_rows_[j] == r, ErrorCode::corrupt, "coo_rows must follow CSR row layout");
        if (j > offsets_[r] && col_ids_[j] <= col_ids_[j - 1]) sorted_ = false;
      }
    }
  }

  void validate_edge_ids() const {
    require(csc_eid_.size() == ecount_, ErrorCode::corrupt, "csc_eid length must be |E|");
    for (index_t j = 0; j < ecount_; ++j) {
      const index_t p = csc_eid_[j];
      require(p < ecount_, ErrorCode::corrupt, "csc_eid entry out of range");
      require(coo_rows_[p] == col_ids_[j] && col_ids_[p] == coo_rows_[j], ErrorCode::corrupt,
              "csc_eid must point at the reverse edge");
      require(csc_eid_[p] == j, ErrorCode::corrupt, "csc_eid must be an involution");
    }
  }

  bool compute_symmetry() const {
    for (index_t j = 0; j < ecount_; ++j)
      if (!find_slot(col_ids_[j], coo_rows_[j])) return false;
    return true;
  }

  index_t vcount_ = 0;
  index_t ecount_ = 0;
  std::vector<index_t> offsets_;
  std::vector<index_t> col_ids_;
  std::vector<index_t> coo_rows_;
  std::vector<index_t> csc_eid_;
  std::vector<index_t> deg_;
  std::vector<double> deg_clamped_;
  std::vector<std::byte> payload_;
  std::size_t payload_width_ = 0;
  bool has_edge_ids_ = false;
  bool symmetric_ = true;
  bool sorted_ = true;
};

// Builds the unified representation.  With `symmetrize`, each input edge is
// stored in both directions exactly once (self-loops once, duplicates merged
// keeping the first payload); without it duplicates are rejected.
inline UnifiedGraph build_graph(const EdgeList& edges, index_t vcount, const BuildOptions& opts = {}) {
  struct Item {
    index_t r, c;
    std::size_t input;  // record index, for payload and stable order
  };
  std::vector<Item> items;
  items.reserve(edges.count() * (opts.symmetrize ? 2 : 1));
  for (std::size_t i = 0; i < edges.count(); ++i) {
    const index_t s = edges.src(i), d = edges.dst(i);
    if (s >= vcount || d >= vcount)
      fail(ErrorCode::vertex_range, "edge " + std::to_string(i) + " (" + std::to_string(s) + "," + std::to_string(d) +
                                        ") has a vertex id >= vcount " + std::to_string(vcount));
    items.push_back({s, d, i});
    if (opts.symmetrize && s != d) items.push_back({d, s, i});
  }

  // Sorted (r, c, input) view for deduplication and reverse lookups.
  std::vector<Item> by_key = items;
  std::stable_sort(by_key.begin(), by_key.end(),
                   [](const Item& a, const Item& b) { return std::tie(a.r, a.c) < std::tie(b.r, b.c); });
  {
    std::vector<Item> unique;
    unique.reserve(by_key.size());
    for (const auto& it : by_key) {
      if (!unique.empty() && unique.back().r == it.r && unique.back().c == it.c) {
        if (!opts.symmetrize)
          fail(ErrorCode::duplicate_edge,
               "duplicate edge (" + std::to_string(it.r) + "," + std::to_string(it.c) + ")");
        continue;
      }
      unique.push_back(it);
    }
    by_key = std::move(unique);
  }

  std::vector<Item> ordered;
  if (opts.sort_neighbors) {
    ordered = by_key;
  } else {
    // Input order within each row: keep the first occurrence of each (r, c).
    std::vector<Item> firsts = by_key;
    std::sort(firsts.begin(), firsts.end(), [](const Item& a, const Item& b) {
      return std::tie(a.r, a.input, a.c) < std::tie(b.r, b.input, b.c);
    });
    ordered = std::move(firsts);
  }

  const index_t ecount = ordered.size();
  std::vector<index_t> offsets(vcount + 1, 0);
  std::vector<index_t> col_ids(ecount), coo_rows(ecount);
  for (const auto& it : ordered) ++offsets[it.r + 1];
  std::partial_sum(offsets.begin(), offsets.end(), offsets.begin());
  for (index_t j = 0; j < ecount; ++j) {
    col_ids[j] = ordered[j].c;
    coo_rows[j] = ordered[j].r;
  }

  std::optional<std::vector<index_t>> csc_eid;
  if (opts.need_edge_ids) {
    // slot_of[k] = CSR slot of by_key[k]
    std::vector<index_t> slot_of(ecount);
    if (opts.sort_neighbors) {
      std::iota(slot_of.begin(), slot_of.end(), index_t{0});
    } else {
      std::vector<index_t> perm(ecount);
      std::iota(perm.begin(), perm.end(), index_t{0});
      std::sort(perm.begin(), perm.end(), [&](index_t a, index_t b) {
        return std::tie(coo_rows[a], col_ids[a]) < std::tie(coo_rows[b], col_ids[b]);
      });
      slot_of = perm;
    }
    std::vector<index_t> pair(ecount);
    for (index_t j = 0; j < ecount; ++j) {
      const Item probe{col_ids[j], coo_rows[j], 0};
      auto it = std::lower_bound(by_key.begin(), by_key.end(), probe, [](const Item& a, const Item& b) {
        return std::tie(a.r, a.c) < std::tie(b.r, b.c);
      });
      if (it == by_key.end() || it->r != probe.r || it->c != probe.c)
        fail(ErrorCode::asymmetric, "edge ids need a symmetric topology; (" + std::to_string(coo_rows[j]) + "," +
                                        std::to_string(col_ids[j]) + ") has no reverse edge");
      pair[j] = slot_of[static_cast<std::size_t>(it - by_key.begin())];
    }
    csc_eid = std::move(pair);
  }

  auto g = UnifiedGraph::from_arrays(vcount, std::move(offsets), std::move(col_ids), std::move(coo_rows),
                                     std::move(csc_eid));
  const std::size_t pw = edges.schema().payload_width();
  if (pw > 0) {
    g.payload_width_ = pw;
    g.payload_.resize(ecount * pw);
    for (index_t j = 0; j < ecount; ++j) {
      auto src = edges.payload(ordered[j].input);
      std::copy(src.begin(), src.end(), g.payload_.begin() + static_cast<std::ptrdiff_t>(j * pw));
    }
  }
  return g;
}

// Per-vertex out-degree as reals; `clamped` replaces zero degrees by 1.0.
inline std::vector<double> degrees(const UnifiedGraph& g, bool clamped) {
  if (clamped) return {g.deg_clamped().begin(), g.deg_clamped().end()};
  std::vector<double> out(g.vcount());
  for (index_t v = 0; v < g.vcount(); ++v) out[v] = static_cast<double>(g.deg()[v]);
  return out;
}

}  // namespace graphpy
