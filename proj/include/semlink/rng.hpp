#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace semlink {

/// SplitMix64 as a UniformRandomBitGenerator. Seeding is a single word, so
/// deriving one engine per (item, trial, purpose) costs nothing.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
    x ^= x >> 33;
    x *= 0xFF51AFD7ED558CCDULL;
    x ^= x >> 33;
    x *= 0xC4CEB9FE1A85EC53ULL;
    x ^= x >> 33;
    return x;
}

/// FNV-1a over a purpose tag, so stream derivation is stable across builds.
constexpr std::uint64_t purpose_tag(std::string_view purpose) noexcept {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (char c : purpose) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
    }
    return h;
}

/// Counter-style stream id: hash(purpose, indices...). Order of indices matters.
constexpr std::uint64_t stream_id(std::string_view purpose,
                                  std::initializer_list<std::uint64_t> indices) noexcept {
    std::uint64_t h = mix64(purpose_tag(purpose));
    for (std::uint64_t i : indices) h = mix64(h ^ mix64(i + 0x9E3779B97F4A7C15ULL));
    return h;
}

/// Seed of the independent stream `stream` under `root_seed`.
constexpr std::uint64_t derive_seed(std::uint64_t root_seed, std::uint64_t stream) noexcept {
    return mix64(mix64(root_seed) ^ (stream * 0xD6E8FEB86659FD93ULL + 1));
}

inline SplitMix64 make_engine(std::uint64_t root_seed, std::uint64_t stream) noexcept {
    return SplitMix64(derive_seed(root_seed, stream));
}

}  // namespace semlink
