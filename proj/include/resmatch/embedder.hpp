#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "resmatch/core.hpp"
#include "resmatch/rng.hpp"

namespace resmatch {

// Fixed-length sentence embedding. The dimension is whatever the producing
// embedder declared; consumers must not mix vectors of different dimensions.
struct EmbeddingVector {
    std::vector<double> values;

    int dimension() const { return static_cast<int>(values.size()); }
};

inline double dot(const EmbeddingVector& a, const EmbeddingVector& b) {
    if (a.dimension() != b.dimension())
        throw StructuralError("embedding dimension mismatch: " +
                              std::to_string(a.dimension()) + " vs " +
                              std::to_string(b.dimension()));
    double acc = 0.0;
    for (int i = 0; i < a.dimension(); ++i) acc += a.values[i] * b.values[i];
    return acc;
}

inline double l2_norm(const EmbeddingVector& v) {
    return std::sqrt(dot(v, v));
}

inline double cosine(const EmbeddingVector& a, const EmbeddingVector& b) {
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0)
        throw ComputeError("cosine similarity undefined for zero-norm embedding");
    return dot(a, b) / (na * nb);
}

// Hashed bag-of-words embedding: deterministic, hermetic stand-in for a
// learned sentence encoder. Token order does not matter, token multiplicity
// does. Output is L2-normalized.
inline EmbeddingVector embed_hash(const Expression& expression,
                                  int dimension = 256) {
    if (dimension <= 0)
        throw ConfigError("embedding dimension must be positive");
    EmbeddingVector out;
    out.values.assign(static_cast<std::size_t>(dimension), 0.0);
    for (const std::string& token : expression.tokens) {
        std::uint64_t bucket = fnv1a64(token) % static_cast<std::uint64_t>(dimension);
        out.values[static_cast<std::size_t>(bucket)] += 1.0;
    }
    double n = l2_norm(out);
    for (double& v : out.values) v /= n;
    return out;
}

}  // namespace resmatch
