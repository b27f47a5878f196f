#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace satfuse {

/// Machine-parsable failure category; the CLI prints it as `error[<name>]`.
enum class ErrorKind {
  Format,      // bad magic / malformed file
  Length,      // truncated or oversized payload
  Label,       // class index out of range
  Argument,    // bad shape, bad parameter
  Degenerate,  // input has no usable content (empty class, no valid pair)
  Config,      // unknown key, missing catalog entry
  Contract,    // violated precondition on already-built data
  Version,     // incompatible checkpoint
  Io,          // open/read/write failure
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Format: return "format";
    case ErrorKind::Length: return "length";
    case ErrorKind::Label: return "label";
    case ErrorKind::Argument: return "argument";
    case ErrorKind::Degenerate: return "degenerate";
    case ErrorKind::Config: return "config";
    case ErrorKind::Contract: return "contract";
    case ErrorKind::Version: return "version";
    case ErrorKind::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline void require(bool condition, ErrorKind kind, const std::string& message) {
  if (!condition) throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const char* message) {
  if (!condition) throw Error(kind, message);
}

}  // namespace satfuse
