#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace prl {

// splitmix64 finalizer; used to derive decorrelated seeds from (base, index) pairs
constexpr std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(base ^ mix64(a ^ mix64(b)));
}

// mt19937_64 with explicit inverse-CDF sampling so streams are identical across platforms;
// the std distribution adaptors are implementation-defined and would break byte determinism
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // uniform in [0,1) with 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    int categorical(const double* probs, int k) {
        double u = uniform();
        double c = 0.0;
        for (int i = 0; i < k; ++i) {
            c += probs[i];
            if (u < c) return i;
        }
        return k - 1;  // top-end rounding guard
    }

    int categorical(const std::vector<double>& probs) {
        return categorical(probs.data(), static_cast<int>(probs.size()));
    }

    std::uint64_t next_u64() { return eng_(); }

  private:
    std::mt19937_64 eng_;
};

}  // namespace prl
