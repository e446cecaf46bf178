#pragma once

#include <stdexcept>
#include <string>

namespace sketchmem {

enum class ErrorKind {
  kInvalidInput,         // precondition violated by the caller
  kConfig,               // configuration failed validation
  kFormat,               // malformed file or corpus line
  kCapacity,             // joint fit needs more coordinates than are retained
  kUnderdetermined,      // single-block fit with |retained| < d_x
  kUndefinedSimilarity,  // empty retained intersection
  kChannelAbsent,        // collection sketch lacks the requested channel
  kEmptyCollection,      // estimated count below 0.5
  kNotFound,             // unknown node, module, or record id
};

inline const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::kInvalidInput: return "invalid input";
    case ErrorKind::kConfig: return "config error";
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kCapacity: return "capacity exceeded";
    case ErrorKind::kUnderdetermined: return "underdetermined";
    case ErrorKind::kUndefinedSimilarity: return "undefined similarity";
    case ErrorKind::kChannelAbsent: return "channel absent";
    case ErrorKind::kEmptyCollection: return "empty collection";
    case ErrorKind::kNotFound: return "not found";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool condition, ErrorKind kind, const std::string& what) {
  if (!condition) fail(kind, what);
}

}  // namespace sketchmem
