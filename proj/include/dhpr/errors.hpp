#pragma once

#include <stdexcept>
#include <string>

namespace dhpr {

/// A solver hit a non-finite value mid-iteration. Carries the formatted
/// "<solver> diverged at iteration k: agent i, step <name>" message.
struct DivergedError : std::runtime_error {
  explicit DivergedError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace dhpr
