#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace quartet {

/// Deterministic random source. All distributions are derived from the raw
/// mt19937_64 stream with fixed arithmetic so results are bit-identical for a
/// given seed regardless of the standard library's distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  uint64_t nextU64() { return engine_(); }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(nextU64() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, n).
  int64_t uniformInt(int64_t n) { return static_cast<int64_t>(nextU64() % static_cast<uint64_t>(n)); }

  /// Standard normal via Box-Muller; one spare value is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    // Avoid log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    has_spare_ = true;
    return r * std::cos(theta);
  }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(uniformInt(static_cast<int64_t>(i)));
      std::swap(items[i - 1], items[j]);
    }
  }

  /// Engine + cached-spare state as text, for exact training resume.
  std::string serialize() const {
    std::ostringstream out;
    out << engine_ << " " << (has_spare_ ? 1 : 0) << " ";
    out.precision(17);
    out << spare_;
    return out.str();
  }

  void deserialize(const std::string& text) {
    std::istringstream in(text);
    int has = 0;
    in >> engine_ >> has >> spare_;
    has_spare_ = has != 0;
  }

  /// Derives an independent deterministic seed from (seed, index) pairs.
  static uint64_t mix(uint64_t seed, uint64_t index) {
    uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 engine_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace quartet
