#pragma once

#include <cstdint>

namespace hjb {

/// Counter-based generator: the value at (seed, stream, index) is a pure
/// function of its arguments, so parallel loops draw identical numbers for any
/// worker count. Mixing is SplitMix64's finalizer applied to a combined key.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {}

    [[nodiscard]] std::uint64_t seed() const { return seed_; }
    [[nodiscard]] std::uint64_t stream() const { return stream_; }

    [[nodiscard]] std::uint64_t bits(std::uint64_t index) const {
        std::uint64_t key = mix(seed_ + 0x9E3779B97F4A7C15ULL * (stream_ + 1));
        return mix(key ^ (index * 0xD1B54A32D192ED03ULL + 0x8CB92BA72F3D8DD7ULL));
    }

    /// Uniform on [0, 1) with 53 random bits.
    [[nodiscard]] double uniform(std::uint64_t index) const {
        return static_cast<double>(bits(index) >> 11) * 0x1.0p-53;
    }

    [[nodiscard]] double uniform(std::uint64_t index, double lo, double hi) const {
        return lo + (hi - lo) * uniform(index);
    }

    /// Independent generator for a sub-task.
    [[nodiscard]] CounterRng substream(std::uint64_t k) const {
        return CounterRng(seed_, mix(stream_ * 0xBF58476D1CE4E5B9ULL + k + 1));
    }

private:
    static std::uint64_t mix(std::uint64_t z) {
        z += 0x9E3779B97F4A7C15ULL;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
};

}  // namespace hjb
