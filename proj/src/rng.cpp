#include "psidiff/rng.hpp"

#include "psidiff/numerics.hpp"

namespace psidiff {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : key_(mix64(seed)), engine_(key_) {}

Rng Rng::split(std::uint64_t index) const {
    Rng child(0);
    child.key_ = mix64(key_ ^ mix64(index + 0x632be59bd9b4e019ULL));
    child.engine_.seed(child.key_);
    return child;
}

double Rng::uniform() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) {
    require(n > 0, "Rng::below: empty range");
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
}

}  // namespace psidiff
