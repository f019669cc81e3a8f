#pragma once

#include <cstdint>
#include <random>

namespace psidiff {

// Seeded random stream that can be split into independent child streams.
// Children are keyed by (parent key, index), so a Monte-Carlo sample i can
// own stream `root.split(i)` and results do not depend on scheduling.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    Rng split(std::uint64_t index) const;

    std::uint64_t key() const { return key_; }
    std::uint64_t next_u64() { return engine_(); }

    // Uniform on the open interval (0, 1).
    double uniform();
    double normal() { return normal_(engine_); }
    // Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n);

    std::mt19937_64& engine() { return engine_; }

private:
    std::uint64_t key_;
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_;
};

// SplitMix64 finalizer, used for key derivation and config hashing.
std::uint64_t mix64(std::uint64_t x);

}  // namespace psidiff
