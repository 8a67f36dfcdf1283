#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace capret {

/// Portable seeded generator.
///
/// Only the raw std::mt19937_64 stream is used (its output sequence is fixed
/// by the standard); uniform, index and normal draws are implemented here so
/// results do not depend on the standard library's distribution classes.
class Rng {
public:
    static constexpr std::string_view kAlgorithm = "mt19937_64+box-muller/1";

    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling, unbiased.
    std::size_t index(std::size_t n);

    double normal();

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

std::uint64_t fnv1a64(std::string_view s);

// Sub-seed derived from a run seed and a component label, so adding a new
// random component never shifts the streams of existing ones.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view label);

}  // namespace capret
