#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rangead/dataset.hpp"
#include "rangead/matrix.hpp"

namespace rangead {

/// k-nearest-neighbour distance detector: the score of x is the Euclidean
/// distance to its k-th nearest reference point. Exact brute-force search.
class KnnDetector {
public:
    KnnDetector(Matrix reference, std::size_t k);

    const Matrix& reference() const noexcept { return reference_; }
    std::size_t k() const noexcept { return k_; }
    std::size_t dims() const noexcept { return reference_.cols(); }

    bool operator==(const KnnDetector&) const = default;

private:
    Matrix reference_;
    std::size_t k_;
};

inline constexpr std::size_t kDefaultKnnK = 5;

/// Stores the feature rows of `data`, which must hold normal rows only.
/// Requires 1 <= k <= data.size().
KnnDetector knn_fit(const Dataset& data, std::size_t k = kDefaultKnnK);
KnnDetector knn_fit(const Matrix& points, std::size_t k = kDefaultKnnK);

/// Euclidean distances from x to every reference point, in reference order.
std::vector<double> knn_distances(const KnnDetector& det, std::span<const double> x);

double knn_score(const KnnDetector& det, std::span<const double> x);

/// knn_score for every row of `xs`, spread over `threads` workers.
std::vector<double> knn_score_batch(const KnnDetector& det, const Matrix& xs, std::size_t threads = 1);

}  // namespace rangead
