#pragma once

#include <stdexcept>
#include <string>

namespace retro {

enum class ErrorKind {
  parse,            // malformed input file or response body
  validation,       // domain invariant violated
  capacity,         // not enough entries to satisfy a request
  degenerate_input, // mathematically ill-posed input (zero norm, empty margin)
  transport,        // provider unreachable after retries
  mismatch,         // incompatible inputs (model ids, variants, dimensions)
  config,           // bad or missing configuration
  io,               // filesystem failure
  unsupported,      // unknown format or option
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& msg) { throw Error(kind, msg); }

} // namespace retro
