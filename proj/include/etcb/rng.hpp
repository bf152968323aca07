#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

#include <Eigen/Core>

namespace etcb {

/// Roles a random stream can play inside one replicate. Distinct roles of the
/// same (seed, replicate) pair never share draws.
enum class StreamRole : std::uint64_t {
  actions = 1,
  process_noise = 2,
  reward_noise = 3,
  rounding = 4,
  system = 5,
  solver_init = 6,
  directions = 7,
};

namespace detail {
inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Counter-based generator: the i-th output is a bijective mix of
/// key + i * golden, so any stream position is reachable without replaying
/// earlier draws and streams with distinct keys are independent.
/// Satisfies UniformRandomBitGenerator.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng() noexcept = default;
  constexpr explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept {
    return std::numeric_limits<result_type>::max();
  }

  constexpr result_type operator()() noexcept {
    ++counter_;
    return detail::mix64(key_ + counter_ * detail::kGolden);
  }

  /// Independent child stream; child i is the same no matter how many draws
  /// the parent has made.
  constexpr CounterRng split(std::uint64_t index) const noexcept {
    return CounterRng(detail::mix64(key_ ^ detail::mix64(index + 0x5851f42d4c957f2dULL)));
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t position() const noexcept { return counter_; }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() noexcept {
    return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
  }

  /// Standard normal draw (Marsaglia polar method, no cached state).
  double normal() noexcept {
    for (;;) {
      const double a = 2.0 * uniform() - 1.0;
      const double b = 2.0 * uniform() - 1.0;
      const double s = a * a + b * b;
      if (s > 0.0 && s < 1.0) return a * std::sqrt(-2.0 * std::log(s) / s);
    }
  }

  Eigen::VectorXd normal_vector(Eigen::Index size) {
    Eigen::VectorXd v(size);
    for (Eigen::Index i = 0; i < size; ++i) v[i] = normal();
    return v;
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
};

/// Stream for (experiment seed, replicate index, role).
constexpr CounterRng make_stream(std::uint64_t seed, std::uint64_t replicate,
                                 StreamRole role) noexcept {
  std::uint64_t k = detail::mix64(seed + detail::kGolden);
  k = detail::mix64(k ^ (replicate * 0xd1b54a32d192ed03ULL + 1));
  k = detail::mix64(k ^ (static_cast<std::uint64_t>(role) * 0xaef17502108ef2d9ULL));
  return CounterRng(k);
}

}  // namespace etcb
