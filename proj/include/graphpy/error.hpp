#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace graphpy {

enum class ErrorCode {
  parse,
  schema,
  width_mismatch,
  vertex_range,
  duplicate_edge,
  asymmetric,
  missing_edge_ids,
  shape,
  bad_argument,
  bad_magic,
  version_mismatch,
  truncated,
  corrupt,
  io,
  state_tensor_missing,
  backward_twice,
  non_scalar_loss,
  missing_grad,
  clock,
  ledger_negative,
  cap_exceeded,
  out_of_memory,
};

inline const char* to_string(ErrorCode c) {
  switch (c) {
    case ErrorCode::parse: return "parse";
    case ErrorCode::schema: return "schema";
    case ErrorCode::width_mismatch: return "width_mismatch";
    case ErrorCode::vertex_range: return "vertex_range";
    case ErrorCode::duplicate_edge: return "duplicate_edge";
    case ErrorCode::asymmetric: return "asymmetric";
    case ErrorCode::missing_edge_ids: return "missing_edge_ids";
    case ErrorCode::shape: return "shape";
    case ErrorCode::bad_argument: return "bad_argument";
    case ErrorCode::bad_magic: return "bad_magic";
    case ErrorCode::version_mismatch: return "version_mismatch";
    case ErrorCode::truncated: return "truncated";
    case ErrorCode::corrupt: return "corrupt";
    case ErrorCode::io: return "io";
    case ErrorCode::state_tensor_missing: return "state_tensor_missing";
    case ErrorCode::backward_twice: return "backward_twice";
    case ErrorCode::non_scalar_loss: return "non_scalar_loss";
    case ErrorCode::missing_grad: return "missing_grad";
    case ErrorCode::clock: return "clock";
    case ErrorCode::ledger_negative: return "ledger_negative";
    case ErrorCode::cap_exceeded: return "cap_exceeded";
    case ErrorCode::out_of_memory: return "out_of_memory";
  }
  return "unknown";
}

// Every failure in the library surfaces as this exception; `code()` tells
// callers which contract was violated.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

// Text-parse failure; `line()` is 1-based.
class ParseError : public Error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : Error(ErrorCode::parse, "line " + std::to_string(line) + ": " + what), line_(line) {}

  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace graphpy
