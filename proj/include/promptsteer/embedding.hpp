#pragma once

#include <span>
#include <vector>

namespace promptsteer {

/// A pooled encoder output (or any vector living in that space).
using EmbeddingVector = std::vector<double>;

double l2_norm(std::span<const double> v);

/// a.b / (|a| |b|), accumulated in double. MathError on a zero-norm input
/// or a length mismatch.
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// |a - b| / |b|.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace promptsteer
