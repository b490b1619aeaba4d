#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "graphpy/error.hpp"
#include "graphpy/graph.hpp"

namespace graphpy {

// Little-endian layout:
//   "GPYG" | version u32 | flags u32 (bit0: csc_eid) | vcount u64 | ecount u64
//   | offsets[(V+1) u64] | col_ids[E u64] | coo_rows[E u64] | csc_eid[E u64]?
inline constexpr std::array<char, 4> kGraphMagic{'G', 'P', 'Y', 'G'};
inline constexpr std::uint32_t kGraphVersion = 1;
inline constexpr std::uint32_t kFlagEdgeIds = 1u;

namespace detail {

template <typename U>
void put_le(std::ostream& out, U v) {
  unsigned char buf[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xffu);
  out.write(reinterpret_cast<const char*>(buf), sizeof(U));
}

template <typename U>
U get_le(std::istream& in, const char* what) {
  unsigned char buf[sizeof(U)];
  in.read(reinterpret_cast<char*>(buf), sizeof(U));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(U)))
    fail(ErrorCode::truncated, std::string("stream ends inside ") + what);
  U v = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(buf[i]) << (8 * i);
  return v;
}

inline std::vector<index_t> get_array(std::istream& in, std::uint64_t n, const char* what) {
  std::vector<index_t> out;
  // Grow incrementally so a corrupt length cannot force a huge allocation.
  constexpr std::uint64_t kChunk = 1u << 16;
  out.reserve(static_cast<std::size_t>(std::min(n, kChunk)));
  for (std::uint64_t i = 0; i < n; ++i) out.push_back(get_le<std::uint64_t>(in, what));
  return out;
}

}  // namespace detail

// Writes `g`; returns the number of bytes written.
inline std::size_t save_graph(const UnifiedGraph& g, std::ostream& out) {
  out.write(kGraphMagic.data(), 4);
  detail::put_le<std::uint32_t>(out, kGraphVersion);
  detail::put_le<std::uint32_t>(out, g.has_edge_ids() ? kFlagEdgeIds : 0u);
  detail::put_le<std::uint64_t>(out, g.vcount());
  detail::put_le<std::uint64_t>(out, g.ecount());
  auto put_all = [&](std::span<const index_t> a) {
    for (auto v : a) detail::put_le<std::uint64_t>(out, v);
  };
  put_all(g.offsets());
  put_all(g.col_ids());
  put_all(g.coo_rows());
  if (g.has_edge_ids()) put_all(g.csc_eid());
  if (!out) fail(ErrorCode::io, "write failed");
  return 4 + 4 + 4 + 8 + 8 + 8 * g.storage_elements();
}

inline UnifiedGraph load_graph(std::istream& in) {
  std::array<char, 4> magic{};
  in.read(magic.data(), 4);
  if (in.gcount() != 4) fail(ErrorCode::truncated, "stream ends inside magic");
  if (magic != kGraphMagic) fail(ErrorCode::bad_magic, "not a GPYG graph file");
  const auto version = detail::get_le<std::uint32_t>(in, "version");
  if (version != kGraphVersion)
    fail(ErrorCode::version_mismatch, "unsupported version " + std::to_string(version));
  const auto flags = detail::get_le<std::uint32_t>(in, "flags");
  if (flags & ~kFlagEdgeIds) fail(ErrorCode::corrupt, "unknown flag bits");
  const auto vcount = detail::get_le<std::uint64_t>(in, "vcount");
  const auto ecount = detail::get_le<std::uint64_t>(in, "ecount");
  if (vcount == std::numeric_limits<std::uint64_t>::max()) fail(ErrorCode::corrupt, "vcount overflow");
  auto offsets = detail::get_array(in, vcount + 1, "offsets");
  auto col_ids = detail::get_array(in, ecount, "col_ids");
  auto coo_rows = detail::get_array(in, ecount, "coo_rows");
  std::optional<std::vector<index_t>> eid;
  if (flags & kFlagEdgeIds) eid = detail::get_array(in, ecount, "csc_eid");
  return UnifiedGraph::from_arrays(vcount, std::move(offsets), std::move(col_ids), std::move(coo_rows),
                                   std::move(eid));
}

inline std::size_t save_graph(const UnifiedGraph& g, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::io, "cannot open '" + path + "' for writing");
  return save_graph(g, out);
}

inline UnifiedGraph load_graph(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::io, "cannot open '" + path + "'");
  return load_graph(in);
}

}  // namespace graphpy
