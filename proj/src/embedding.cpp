#include "promptsteer/embedding.hpp"

#include "promptsteer/errors.hpp"
#include "promptsteer/simd.hpp"

#include <cmath>
#include <string>

namespace promptsteer {

double l2_norm(std::span<const double> v) { return std::sqrt(simd::dot(v, v)); }

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw MathError("cosine of vectors with different lengths (" + std::to_string(a.size()) +
                        " vs " + std::to_string(b.size()) + ")");
    }
    const double na = l2_norm(a);
    const double nb = l2_norm(b);
    if (!(na > 0.0) || !(nb > 0.0)) throw MathError("cosine of a zero-norm vector");
    return simd::dot(a, b) / (na * nb);
}

double relative_error(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw MathError("relative error of vectors with different lengths");
    double diff = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
    const double nb = l2_norm(b);
    if (!(nb > 0.0)) throw MathError("relative error against a zero-norm reference");
    return std::sqrt(diff) / nb;
}

}  // namespace promptsteer
