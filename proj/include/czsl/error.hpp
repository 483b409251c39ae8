#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace czsl {

// Error taxonomy shared across the library. The CLI maps kinds onto exit
// codes: usage/config problems -> 1, data validation -> 2, I/O -> 3.
enum class ErrorKind {
  contract,    // precondition or API misuse
  shape,       // tensor dimension mismatch
  index,       // out-of-range index
  degenerate,  // numerically degenerate input (near-zero row, all-masked row)
  state,       // object in wrong state (e.g. consumed tape)
  config,      // bad configuration value or flag combination
  data,        // dataset / split validation failure
  lookup,      // unknown id or name
  io,          // filesystem failure
  integrity,   // corrupt or truncated file
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg)
      : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {
inline void concat_into(std::ostringstream&) {}
template <typename T, typename... Rest>
void concat_into(std::ostringstream& os, const T& head, const Rest&... rest) {
  os << head;
  concat_into(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string concat(const Args&... args) {
  std::ostringstream os;
  detail::concat_into(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(ErrorKind kind, const Args&... args) {
  throw Error(kind, concat(args...));
}

template <typename... Args>
void check(bool cond, ErrorKind kind, const Args&... args) {
  if (!cond) fail(kind, args...);
}

}  // namespace czsl
