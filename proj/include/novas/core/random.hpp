#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <vector>

#include "novas/core/tensor.hpp"

namespace novas {

// Counter-based generator (Philox4x32-10). A stream is addressed by a key;
// split(id) derives a child key, so (seed, step, iteration, row) paths give
// independent, reproducible streams regardless of evaluation order.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed = 0);

  RandomStream split(std::uint64_t id) const;

  std::uint64_t key() const { return key_; }
  // Number of 128-bit blocks consumed so far.
  std::uint64_t cursor() const { return counter_; }
  void seek(std::uint64_t cursor);

  result_type operator()();
  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  double uniform();                        // [0, 1)
  double uniform(double lo, double hi);
  double normal();                         // standard normal, Box-Muller
  std::uint64_t below(std::uint64_t n);    // uniform integer in [0, n)

  Tensor normal_tensor(const Shape& shape, double mean = 0.0, double stddev = 1.0);
  Tensor uniform_tensor(const Shape& shape, double lo, double hi);

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  std::array<std::uint64_t, 2> block_{};
  int available_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace novas
