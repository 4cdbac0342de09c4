#include "novas/core/random.hpp"

#include <cmath>
#include <numbers>

namespace novas {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

std::array<std::uint32_t, 4> philox4x32_10(std::array<std::uint32_t, 4> ctr,
                                           std::array<std::uint32_t, 2> key) {
  constexpr std::uint32_t kM0 = 0xD2511F53, kM1 = 0xCD9E8D57;
  constexpr std::uint32_t kW0 = 0x9E3779B9, kW1 = 0xBB67AE85;
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM0, ctr[0], hi0, lo0);
    mulhilo(kM1, ctr[2], hi1, lo1);
    ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    key[0] += kW0;
    key[1] += kW1;
  }
  return ctr;
}

}  // namespace

RandomStream::RandomStream(std::uint64_t seed) : key_(splitmix64(seed)) {}

RandomStream RandomStream::split(std::uint64_t id) const {
  RandomStream child;
  child.key_ = splitmix64(key_ ^ splitmix64(id + 0x632BE59BD9B4E019ULL));
  return child;
}

void RandomStream::seek(std::uint64_t cursor) {
  counter_ = cursor;
  available_ = 0;
  has_spare_ = false;
}

void RandomStream::refill() {
  const std::array<std::uint32_t, 4> ctr{static_cast<std::uint32_t>(counter_),
                                         static_cast<std::uint32_t>(counter_ >> 32), 0u, 0u};
  const std::array<std::uint32_t, 2> key{static_cast<std::uint32_t>(key_),
                                         static_cast<std::uint32_t>(key_ >> 32)};
  const auto out = philox4x32_10(ctr, key);
  block_[0] = (static_cast<std::uint64_t>(out[1]) << 32) | out[0];
  block_[1] = (static_cast<std::uint64_t>(out[3]) << 32) | out[2];
  ++counter_;
  available_ = 2;
}

RandomStream::result_type RandomStream::operator()() {
  if (available_ == 0) refill();
  return block_[2 - available_--];
}

double RandomStream::uniform() {
  return static_cast<double>((*this)() >> 11) * 0x1.0p-53;
}

double RandomStream::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double RandomStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  // 1 - u keeps the log argument in (0, 1].
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  spare_normal_ = radius * std::sin(angle);
  has_spare_ = true;
  return radius * std::cos(angle);
}

std::uint64_t RandomStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("below(0)");
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t x;
  do {
    x = (*this)();
  } while (x >= limit);
  return x % n;
}

Tensor RandomStream::normal_tensor(const Shape& shape, double mean, double stddev) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = mean + stddev * normal();
  return Tensor::from(shape, std::move(v));
}

Tensor RandomStream::uniform_tensor(const Shape& shape, double lo, double hi) {
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = uniform(lo, hi);
  return Tensor::from(shape, std::move(v));
}

}  // namespace novas
