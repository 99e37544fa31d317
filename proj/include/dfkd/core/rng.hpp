#pragma once

#include <cstdint>
#include <span>
#include <utility>

namespace dfkd {

// Counter-based splittable generator. The n-th draw of a stream is a pure
// function of (key, n), where the key is derived from the seed and the chain
// of child indices, so streams reproduce bitwise on every platform and can be
// handed out per image or per worker without coordination.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0);

  // Independent stream identified by index; does not advance this stream.
  [[nodiscard]] Rng child(std::uint64_t index) const;

  std::uint64_t next_u64();
  double uniform();  // [0, 1)
  double uniform(double lo, double hi);
  double normal();   // standard normal, Box-Muller
  // Normal(0, stddev) resampled until |x| <= bound_sigmas * stddev.
  double truncated_normal(double stddev, double bound_sigmas = 2.0);
  std::uint64_t below(std::uint64_t n);  // uniform integer in [0, n)
  bool bernoulli(double p);

  template <class T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  Rng(std::uint64_t key, std::uint64_t counter, int) : key_(key), counter_(counter) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t mix64(std::uint64_t x);

}  // namespace dfkd
