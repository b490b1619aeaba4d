#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string>

#include "graphpy/error.hpp"

namespace graphpy {

enum class MemCategory : std::size_t {
  topology,
  edge_id,
  coo_row,
  dummy_edge_tensor,
  shuffle_intermediate,
  state_tensor,
  activation,
  degree_aux,
};

inline constexpr std::size_t kMemCategoryCount = 8;

inline const char* to_string(MemCategory c) {
  constexpr std::array<const char*, kMemCategoryCount> names{
      "topology",  "edge_id",      "coo_row",    "dummy_edge_tensor", "shuffle_intermediate",
      "state_tensor", "activation", "degree_aux"};
  return names[static_cast<std::size_t>(c)];
}

inline constexpr std::array<MemCategory, kMemCategoryCount> kAllMemCategories{
    MemCategory::topology,          MemCategory::edge_id,      MemCategory::coo_row,
    MemCategory::dummy_edge_tensor, MemCategory::shuffle_intermediate, MemCategory::state_tensor,
    MemCategory::activation,        MemCategory::degree_aux};

// Element counts per category.
struct ElementCounts {
  std::array<std::int64_t, kMemCategoryCount> counts{};

  std::int64_t& operator[](MemCategory c) { return counts[static_cast<std::size_t>(c)]; }
  std::int64_t operator[](MemCategory c) const { return counts[static_cast<std::size_t>(c)]; }

  std::int64_t total() const {
    std::int64_t t = 0;
    for (auto v : counts) t += v;
    return t;
  }

  // Sum of the graph-storage categories (topology, edge ids, COO rows).
  std::int64_t static_storage() const {
    return (*this)[MemCategory::topology] + (*this)[MemCategory::edge_id] + (*this)[MemCategory::coo_row];
  }

  friend bool operator==(const ElementCounts&, const ElementCounts&) = default;
};

struct LedgerSnapshot {
  ElementCounts current;
  ElementCounts peak;           // per-category high-water marks
  std::int64_t peak_total = 0;  // high-water mark of the live total
};

// Per-session element accounting.  Allocations record a positive delta,
// releases the matching negative one.
class MemoryLedger {
 public:
  void record(MemCategory c, std::int64_t delta) {
    const std::int64_t next = current_[c] + delta;
    if (next < 0)
      fail(ErrorCode::ledger_negative,
           std::string("category ") + to_string(c) + " would drop to " + std::to_string(next));
    const auto t = current_.total() + delta;
    if (budget_ > 0 && delta > 0 && t > budget_)
      fail(ErrorCode::out_of_memory, std::string("allocating ") + std::to_string(delta) + " elements of " +
                                         to_string(c) + " exceeds the budget of " + std::to_string(budget_));
    current_[c] = next;
    if (next > peak_[c]) peak_[c] = next;
    if (t > peak_total_) peak_total_ = t;
  }

  LedgerSnapshot snapshot() const { return {current_, peak_, peak_total_}; }

  // Live-total limit in elements; 0 disables the check.
  void set_budget(std::int64_t elements) { budget_ = elements; }

 private:
  std::int64_t budget_ = 0;
  ElementCounts current_;
  ElementCounts peak_;
  std::int64_t peak_total_ = 0;
};

// Records +n on construction and -n on destruction.
class ScopedAllocation {
 public:
  ScopedAllocation(MemoryLedger* ledger, MemCategory c, std::int64_t n) : ledger_(ledger), cat_(c), n_(n) {
    if (ledger_) ledger_->record(cat_, n_);
  }
  ~ScopedAllocation() {
    if (ledger_) ledger_->record(cat_, -n_);
  }
  ScopedAllocation(const ScopedAllocation&) = delete;
  ScopedAllocation& operator=(const ScopedAllocation&) = delete;

 private:
  MemoryLedger* ledger_;
  MemCategory cat_;
  std::int64_t n_;
};

enum class LayoutMode { graphpy, dgl_emulation };
// Class A models carry edge-level tensors (GAT); class B only vertex-level (GCN, GIN).
enum class ModelClass { A, B };

inline const char* to_string(LayoutMode m) { return m == LayoutMode::graphpy ? "graphpy" : "dgl-emulation"; }
inline const char* to_string(ModelClass c) { return c == ModelClass::A ? "A" : "B"; }

struct LayoutCost {
  ElementCounts storage;        // persistent graph formats
  ElementCounts per_iteration;  // transient buffers allocated every iteration
  ElementCounts per_spmm;       // transient buffers allocated per transposed gSpMM call
};

// Closed-form element counts of the graph formats.  Offsets arrays hold
// |V|+1 entries, so |V| in the usual formulas appears here as |V|+1.
// 
//   graphpy, class A:  (|V|+1) + |E| shared CSR/CSC + |E| COO rows + |E| CSC edge ids
//   graphpy, class B:  (|V|+1) + |E|
//   dgl emulation:     CSR and CSC each (|V|+1) + |E| + |E| eids, COO 2|E|
inline LayoutCost layout_cost(LayoutMode mode, std::uint64_t vcount, std::uint64_t ecount, ModelClass cls) {
  const auto v1 = static_cast<std::int64_t>(vcount) + 1;
  const auto e = static_cast<std::int64_t>(ecount);
  LayoutCost c;
  if (mode == LayoutMode::graphpy) {
    c.storage[MemCategory::topology] = v1 + e;
    if (cls == ModelClass::A) {
      c.storage[MemCategory::coo_row] = e;
      c.storage[MemCategory::edge_id] = e;
    }
  } else {
    c.storage[MemCategory::topology] = 2 * (v1 + e);
    c.storage[MemCategory::edge_id] = 2 * e;
    c.storage[MemCategory::coo_row] = 2 * e;
    if (cls == ModelClass::B) {
      c.per_iteration[MemCategory::dummy_edge_tensor] = e;
      c.per_iteration[MemCategory::degree_aux] = static_cast<std::int64_t>(vcount);
    } else {
      c.per_spmm[MemCategory::shuffle_intermediate] = e;
    }
  }
  return c;
}

}  // namespace graphpy
