#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace tqe {

std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent stream seed from a master seed and a stream name,
/// so that e.g. the shuffle order and the dropout masks never share a stream.
std::uint64_t derive_seed(std::uint64_t master, std::string_view stream);

/// mt19937_64 with hand-rolled uniform/int/shuffle helpers. The standard pins
/// the engine output but not the distributions, so the helpers here are what
/// make runs bit-reproducible across standard libraries.
class DetRng {
 public:
  explicit DetRng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next_u64() { return gen_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, bound) by rejection sampling.
  std::uint64_t below(std::uint64_t bound);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace tqe
