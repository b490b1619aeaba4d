#pragma once

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <istream>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "graphpy/error.hpp"

namespace graphpy {

enum class FieldKind { vertex_id, i32, u32, f32, f64 };

constexpr std::size_t field_width(FieldKind k) noexcept {
  switch (k) {
    case FieldKind::vertex_id: return 8;
    case FieldKind::i32:
    case FieldKind::u32:
    case FieldKind::f32: return 4;
    case FieldKind::f64: return 8;
  }
  return 0;
}

struct EdgeField {
  std::string name;
  FieldKind kind;
};

// Per-edge record layout.  Fields 0 and 1 are always the source and
// destination vertex IDs (u64); any further fields form the payload.
class EdgeSchema {
 public:
  EdgeSchema() : EdgeSchema({{"src", FieldKind::vertex_id}, {"dst", FieldKind::vertex_id}}) {}

  explicit EdgeSchema(std::vector<EdgeField> fields) : fields_(std::move(fields)) {
    require(fields_.size() >= 2, ErrorCode::schema, "schema needs at least two fields");
    require(fields_[0].kind == FieldKind::vertex_id && fields_[1].kind == FieldKind::vertex_id,
            ErrorCode::schema, "fields 0 and 1 must be vertex ids");
    std::set<std::string> names;
    for (const auto& f : fields_) {
      require(names.insert(f.name).second, ErrorCode::schema, "duplicate field name '" + f.name + "'");
      offsets_.push_back(width_);
      width_ += field_width(f.kind);
    }
  }

  const std::vector<EdgeField>& fields() const noexcept { return fields_; }
  std::size_t field_count() const noexcept { return fields_.size(); }
  std::size_t width() const noexcept { return width_; }
  std::size_t offset(std::size_t field) const { return offsets_.at(field); }
  // Bytes after the two vertex ids.
  std::size_t payload_width() const noexcept { return width_ - 2 * field_width(FieldKind::vertex_id); }

  friend bool operator==(const EdgeSchema& a, const EdgeSchema& b) {
    if (a.fields_.size() != b.fields_.size()) return false;
    for (std::size_t i = 0; i < a.fields_.size(); ++i)
      if (a.fields_[i].name != b.fields_[i].name || a.fields_[i].kind != b.fields_[i].kind) return false;
    return true;
  }

 private:
  std::vector<EdgeField> fields_;
  std::vector<std::size_t> offsets_;
  std::size_t width_ = 0;
};

// Contiguous buffer of fixed-width edge records in host byte order.
class EdgeList {
 public:
  explicit EdgeList(EdgeSchema schema = {}, std::uint64_t vcount_hint = 0)
      : schema_(std::move(schema)), vcount_hint_(vcount_hint) {}

  const EdgeSchema& schema() const noexcept { return schema_; }
  std::size_t count() const noexcept { return count_; }
  std::span<const std::byte> rows() const noexcept { return rows_; }
  std::uint64_t vcount_hint() const noexcept { return vcount_hint_; }
  void set_vcount_hint(std::uint64_t v) noexcept { vcount_hint_ = v; }

  std::uint64_t src(std::size_t i) const { return read_u64(i, 0); }
  std::uint64_t dst(std::size_t i) const { return read_u64(i, 1); }

  std::span<const std::byte> record(std::size_t i) const {
    return {rows_.data() + i * schema_.width(), schema_.width()};
  }
  std::span<const std::byte> payload(std::size_t i) const {
    return record(i).subspan(2 * field_width(FieldKind::vertex_id));
  }

  // Appends `n` records from `batch`; the batch must hold exactly n records.
  void add_edges(std::span<const std::byte> batch, std::size_t n) {
    require(batch.size() == n * schema_.width(), ErrorCode::width_mismatch,
            "batch of " + std::to_string(batch.size()) + " bytes does not hold " + std::to_string(n) +
                " records of width " + std::to_string(schema_.width()));
    rows_.insert(rows_.end(), batch.begin(), batch.end());
    count_ += n;
  }

  // Convenience for the common two-field schema.
  void add_edge(std::uint64_t s, std::uint64_t d) {
    require(schema_.field_count() == 2, ErrorCode::width_mismatch, "add_edge needs a two-field schema");
    std::byte buf[16];
    std::memcpy(buf, &s, 8);
    std::memcpy(buf + 8, &d, 8);
    add_edges(std::span<const std::byte>(buf, 16), 1);
  }

 private:
  std::uint64_t read_u64(std::size_t i, std::size_t field) const {
    std::uint64_t v;
    std::memcpy(&v, rows_.data() + i * schema_.width() + schema_.offset(field), 8);
    return v;
  }

  EdgeSchema schema_;
  std::vector<std::byte> rows_;
  std::size_t count_ = 0;
  std::uint64_t vcount_hint_ = 0;
};

inline void add_edges(EdgeList& list, std::span<const std::byte> batch, std::size_t n) {
  list.add_edges(batch, n);
}

namespace detail {

template <typename V>
void parse_number(std::string_view tok, std::size_t line, std::byte* out) {
  V v{};
  const char* first = tok.data();
  const char* last = tok.data() + tok.size();
  if constexpr (std::is_unsigned_v<V>) {
    if (first != last && *first == '+') ++first;
  }
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec == std::errc::result_out_of_range) throw ParseError(line, "value out of range: '" + std::string(tok) + "'");
  if (ec != std::errc() || ptr != last) throw ParseError(line, "unparsable token '" + std::string(tok) + "'");
  std::memcpy(out, &v, sizeof(V));
}

inline void parse_field(FieldKind kind, std::string_view tok, std::size_t line, std::byte* out) {
  switch (kind) {
    case FieldKind::vertex_id: parse_number<std::uint64_t>(tok, line, out); break;
    case FieldKind::i32: parse_number<std::int32_t>(tok, line, out); break;
    case FieldKind::u32: parse_number<std::uint32_t>(tok, line, out); break;
    case FieldKind::f32: parse_number<float>(tok, line, out); break;
    case FieldKind::f64: parse_number<double>(tok, line, out); break;
  }
}

}  // namespace detail

// Parses one edge per line.  Blank lines are skipped; with `skip_comments`,
// lines whose first non-blank byte is '#' are skipped too.  A space or tab
// delimiter matches runs of blanks.
inline EdgeList parse_edge_text(std::istream& in, const EdgeSchema& schema = {}, char delimiter = ' ',
                                bool skip_comments = true) {
  require(delimiter != '\n' && delimiter != '\r', ErrorCode::bad_argument, "delimiter must not be a line terminator");
  const bool blank_delim = delimiter == ' ' || delimiter == '\t';
  EdgeList list(schema);
  std::vector<std::byte> rec(schema.width());
  std::vector<std::string_view> toks;
  std::string line;
  std::size_t lineno = 0;
  std::uint64_t max_vid = 0;
  bool any = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string_view sv(line);
    auto first = sv.find_first_not_of(" \t");
    if (first == std::string_view::npos) continue;
    if (skip_comments && sv[first] == '#') continue;

    toks.clear();
    if (blank_delim) {
      std::size_t i = 0;
      while (i < sv.size()) {
        while (i < sv.size() && (sv[i] == ' ' || sv[i] == '\t')) ++i;
        if (i >= sv.size()) break;
        std::size_t j = i;
        while (j < sv.size() && sv[j] != ' ' && sv[j] != '\t') ++j;
        toks.push_back(sv.substr(i, j - i));
        i = j;
      }
    } else {
      std::size_t i = 0;
      while (true) {
        auto j = sv.find(delimiter, i);
        auto tok = sv.substr(i, j == std::string_view::npos ? std::string_view::npos : j - i);
        auto a = tok.find_first_not_of(" \t");
        auto b = tok.find_last_not_of(" \t");
        toks.push_back(a == std::string_view::npos ? std::string_view{} : tok.substr(a, b - a + 1));
        if (j == std::string_view::npos) break;
        i = j + 1;
      }
    }
    if (toks.size() != schema.field_count())
      throw ParseError(lineno, "expected " + std::to_string(schema.field_count()) + " fields, got " +
                                   std::to_string(toks.size()));
    for (std::size_t f = 0; f < toks.size(); ++f)
      detail::parse_field(schema.fields()[f].kind, toks[f], lineno, rec.data() + schema.offset(f));
    list.add_edges(rec, 1);
    max_vid = std::max({max_vid, list.src(list.count() - 1), list.dst(list.count() - 1)});
    any = true;
  }
  if (any) list.set_vcount_hint(max_vid + 1);
  return list;
}

}  // namespace graphpy
