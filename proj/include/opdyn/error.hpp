#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace opdyn {

/// Error raised by any opdyn module. `module()` names the originating module
/// so the CLI can surface it verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string module, const std::string& message)
      : std::runtime_error(message), module_(std::move(module)) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

namespace detail {

[[noreturn]] inline void fail(const char* module, const std::string& message) {
  throw Error(module, message);
}

}  // namespace detail
}  // namespace opdyn
