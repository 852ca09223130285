#pragma once
// Seed plumbing. A single root seed fans out into named streams so that the
// randomness one component consumes is independent of what any other
// component draws, and per-epoch re-derivation lets a resumed run land on
// exactly the stream state an uninterrupted run would have.

#include <cstdint>
#include <random>
#include <string_view>

namespace resmatch {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stream names in use: "data", "image-aug-labeled", "image-aug-unlabeled",
// "text-aug", "model-init", "synthetic", "split".
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream) {
    return splitmix64(root ^ fnv1a64(stream));
}

inline std::uint64_t derive_seed(std::uint64_t root, std::string_view stream,
                                 std::uint64_t index) {
    return splitmix64(derive_seed(root, stream) +
                      0x9e3779b97f4a7c15ULL * (index + 1));
}

inline Rng make_rng(std::uint64_t root, std::string_view stream) {
    return Rng(derive_seed(root, stream));
}

inline Rng make_rng(std::uint64_t root, std::string_view stream,
                    std::uint64_t index) {
    return Rng(derive_seed(root, stream, index));
}

// Sub-seed for the j-th item drawn under an already-derived seed value.
inline std::uint64_t derive_subseed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(base + 0x9e3779b97f4a7c15ULL * (index + 1));
}

inline double uniform_real(Rng& rng, double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

inline int uniform_int(Rng& rng, int lo, int hi) {  // inclusive bounds
    return std::uniform_int_distribution<int>(lo, hi)(rng);
}

}  // namespace resmatch
