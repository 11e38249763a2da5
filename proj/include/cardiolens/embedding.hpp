#pragma once

#include <span>
#include <vector>

namespace cardiolens {

// Unit-norm float32 vector in the joint embedding space.
using Embedding = std::vector<float>;

double l2_norm(std::span<const float> v);

// v / ||v||. Throws NumericError on a zero or non-finite vector.
Embedding normalize(std::span<const float> v);

// Dot product of two unit vectors, accumulated in double and rounded to
// float32, clamped to [-1, 1]. Throws std::invalid_argument on dimension
// mismatch.
float cosine_similarity(const Embedding& a, const Embedding& b);

}  // namespace cardiolens
