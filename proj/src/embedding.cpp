#include "cardiolens/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cardiolens/errors.hpp"

namespace cardiolens {

double l2_norm(std::span<const float> v) {
    double acc = 0.0;
    for (float x : v) acc += static_cast<double>(x) * static_cast<double>(x);
    return std::sqrt(acc);
}

Embedding normalize(std::span<const float> v) {
    for (float x : v) {
        if (!std::isfinite(x)) throw NumericError("normalize: non-finite component");
    }
    double n = l2_norm(v);
    if (n == 0.0) throw NumericError("normalize: zero vector");
    Embedding out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = static_cast<float>(static_cast<double>(v[i]) / n);
    }
    return out;
}

float cosine_similarity(const Embedding& a, const Embedding& b) {
    if (a.size() != b.size()) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch");
    }
    double dot = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * static_cast<double>(b[i]);
    }
    return static_cast<float>(std::clamp(dot, -1.0, 1.0));
}

}  // namespace cardiolens
