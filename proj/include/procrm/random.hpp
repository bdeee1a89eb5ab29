#pragma once

#include <cstdint>
#include <limits>

namespace procrm {

// What a random stream is used for. Keys never collide across purposes, so
// adding a new consumer leaves existing draws untouched.
enum class Purpose : std::uint64_t { arrivals = 1, event_times = 2, test = 99 };

// SplitMix64 stream whose starting state is a hash of
// (seed, replicate, patient, purpose). Satisfies UniformRandomBitGenerator.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  RandomStream(std::uint64_t seed, std::uint64_t replicate, std::uint64_t patient, Purpose purpose)
      : state_(mix(mix(mix(mix(seed) ^ replicate) ^ patient) ^ static_cast<std::uint64_t>(purpose))) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return finalize(state_);
  }

  // Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>((*this)() >> 11) + 0.5) * 0x1.0p-53; }

 private:
  static constexpr std::uint64_t finalize(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }
  static constexpr std::uint64_t mix(std::uint64_t x) { return finalize(x + 0x9e3779b97f4a7c15ULL); }

  std::uint64_t state_;
};

}  // namespace procrm
