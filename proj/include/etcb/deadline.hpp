#pragma once

#include <chrono>
#include <string>

#include "etcb/error.hpp"

namespace etcb {

/// Cooperative wall-clock budget. Long-running loops call check() at safe
/// points; a default-constructed deadline never expires.
class Deadline {
 public:
  using clock = std::chrono::steady_clock;

  Deadline() = default;
  static Deadline after(std::chrono::milliseconds budget) {
    Deadline d;
    d.active_ = budget.count() > 0;
    d.at_ = clock::now() + budget;
    return d;
  }

  bool active() const noexcept { return active_; }
  bool expired() const { return active_ && clock::now() >= at_; }
  void check(const char* where) const {
    if (expired()) throw TimeoutError(std::string("time budget exhausted in ") + where);
  }

 private:
  bool active_ = false;
  clock::time_point at_{};
};

}  // namespace etcb
