#include "rangead/knn.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>
#include <thread>

#include "rangead/error.hpp"

namespace rangead {

namespace {

double squared_distance(const double* a, const double* b, std::size_t d) {
    double acc[4] = {0.0, 0.0, 0.0, 0.0};
    std::size_t i = 0;
    for (; i + 4 <= d; i += 4) {
        for (std::size_t l = 0; l < 4; ++l) {
            const double diff = a[i + l] - b[i + l];
            acc[l] += diff * diff;
        }
    }
    for (; i < d; ++i) {
        const double diff = a[i] - b[i];
        acc[0] += diff * diff;
    }
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

void check_query(const KnnDetector& det, std::span<const double> x) {
    if (x.size() != det.dims()) {
        throw ShapeError("query has " + std::to_string(x.size()) + " features, detector expects " +
                         std::to_string(det.dims()));
    }
}

double kth_distance(const KnnDetector& det, const double* x, std::vector<double>& scratch) {
    const Matrix& ref = det.reference();
    scratch.resize(ref.rows());
    for (std::size_t r = 0; r < ref.rows(); ++r) scratch[r] = squared_distance(x, ref.row(r).data(), ref.cols());
    const auto kth = scratch.begin() + static_cast<std::ptrdiff_t>(det.k() - 1);
    std::nth_element(scratch.begin(), kth, scratch.end());
    return std::sqrt(*kth);
}

}  // namespace

KnnDetector::KnnDetector(Matrix reference, std::size_t k) : reference_(std::move(reference)), k_(k) {
    if (reference_.rows() == 0) {
        throw DataError("kNN needs at least one reference point");
    }
    if (k_ < 1 || k_ > reference_.rows()) {
        throw ConfigError("kNN k = " + std::to_string(k_) + " must lie in [1, " +
                          std::to_string(reference_.rows()) + "]");
    }
    if (!std::ranges::all_of(reference_.values(), [](double v) { return std::isfinite(v); })) {
        throw DataError("kNN reference points must be finite");
    }
}

KnnDetector knn_fit(const Matrix& points, std::size_t k) { return KnnDetector(points, k); }

KnnDetector knn_fit(const Dataset& data, std::size_t k) {
    if (data.count_anomalies() > 0) {
        throw DataError("kNN reference data must not contain anomaly rows");
    }
    return KnnDetector(data.features, k);
}

std::vector<double> knn_distances(const KnnDetector& det, std::span<const double> x) {
    check_query(det, x);
    std::vector<double> out(det.reference().rows());
    for (std::size_t r = 0; r < out.size(); ++r) {
        out[r] = std::sqrt(squared_distance(x.data(), det.reference().row(r).data(), det.dims()));
    }
    return out;
}

double knn_score(const KnnDetector& det, std::span<const double> x) {
    check_query(det, x);
    std::vector<double> scratch;
    return kth_distance(det, x.data(), scratch);
}

std::vector<double> knn_score_batch(const KnnDetector& det, const Matrix& xs, std::size_t threads) {
    if (xs.rows() == 0) return {};
    if (xs.cols() != det.dims()) {
        throw ShapeError("queries have " + std::to_string(xs.cols()) + " features, detector expects " +
                         std::to_string(det.dims()));
    }
    std::vector<double> out(xs.rows());
    constexpr std::size_t kChunkRows = 64;
    const std::size_t chunks = (xs.rows() + kChunkRows - 1) / kChunkRows;
    std::atomic<std::size_t> next{0};
    const auto worker = [&] {
        std::vector<double> scratch;
        for (std::size_t c = next++; c < chunks; c = next++) {
            const std::size_t end = std::min(xs.rows(), (c + 1) * kChunkRows);
            for (std::size_t r = c * kChunkRows; r < end; ++r) out[r] = kth_distance(det, xs.row(r).data(), scratch);
        }
    };
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, chunks);
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
    }
    return out;
}

}  // namespace rangead
