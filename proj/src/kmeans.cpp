#include "fastdco/quant.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <random>

namespace fastdco {

std::pair<std::int32_t, float> nearest_centroid(const RowMatrixXf& centroids,
                                                const Eigen::Ref<const Eigen::RowVectorXf>& x) {
    std::int32_t best = 0;
    float best_dist = std::numeric_limits<float>::infinity();
    for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
        const float d = (centroids.row(c) - x).squaredNorm();
        if (d < best_dist) {
            best_dist = d;
            best = static_cast<std::int32_t>(c);
        }
    }
    return {best, best_dist};
}

namespace {

RowMatrixXf kmeanspp_seed(const RowMatrixXf& points, int k, std::mt19937_64& rng) {
    const Eigen::Index n = points.rows();
    RowMatrixXf centroids(k, points.cols());
    std::uniform_int_distribution<Eigen::Index> first(0, n - 1);
    centroids.row(0) = points.row(first(rng));

    std::vector<double> d2(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
        d2[static_cast<std::size_t>(i)] = (points.row(i) - centroids.row(0)).squaredNorm();

    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int c = 1; c < k; ++c) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        Eigen::Index pick = 0;
        if (total > 0.0) {
            double target = unif(rng) * total;
            pick = n - 1;
            for (Eigen::Index i = 0; i < n; ++i) {
                target -= d2[static_cast<std::size_t>(i)];
                if (target < 0.0) {
                    pick = i;
                    break;
                }
            }
            // never pick a point already coincident with a centroid
            while (d2[static_cast<std::size_t>(pick)] == 0.0) pick = (pick + n - 1) % n;
        } else {
            // fewer distinct points than k: duplicate
            pick = c % n;
        }
        centroids.row(c) = points.row(pick);
        for (Eigen::Index i = 0; i < n; ++i) {
            const double d = (points.row(i) - centroids.row(c)).squaredNorm();
            auto& cur = d2[static_cast<std::size_t>(i)];
            cur = std::min(cur, d);
        }
    }
    return centroids;
}

}  // namespace

KMeansResult kmeans(const RowMatrixXf& points, int k, const KMeansOptions& options, const RowMatrixXf* init) {
    require(k >= 1, "k must be positive");
    require(points.rows() >= 1, "k-means needs at least one point");
    require(options.max_iters >= 0, "max_iters must be non-negative");
    const Eigen::Index n = points.rows();
    const Eigen::Index dim = points.cols();

    std::mt19937_64 rng(options.seed);
    KMeansResult result;
    if (init != nullptr) {
        require(init->rows() == k && init->cols() == dim, "initial centroids have the wrong shape",
                ErrorCode::dimension_mismatch);
        result.centroids = *init;
    } else {
        result.centroids = kmeanspp_seed(points, k, rng);
    }

    result.assignment.assign(static_cast<std::size_t>(n), -1);
    std::vector<float> dist(static_cast<std::size_t>(n));
    Eigen::MatrixXd sums(k, dim);
    std::vector<Eigen::Index> counts(static_cast<std::size_t>(k));

    for (int iter = 0;; ++iter) {
        bool changed = false;
        double objective = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto [c, d] = nearest_centroid(result.centroids, points.row(i));
            auto& a = result.assignment[static_cast<std::size_t>(i)];
            changed |= (a != c);
            a = c;
            dist[static_cast<std::size_t>(i)] = d;
            objective += d;
        }
        result.objective.push_back(objective);
        if (iter >= options.max_iters || (!changed && iter > 0)) break;

        sums.setZero();
        std::fill(counts.begin(), counts.end(), 0);
        for (Eigen::Index i = 0; i < n; ++i) {
            const auto c = result.assignment[static_cast<std::size_t>(i)];
            sums.row(c) += points.row(i).cast<double>();
            ++counts[static_cast<std::size_t>(c)];
        }
        std::vector<int> empty;
        for (int c = 0; c < k; ++c) {
            if (counts[static_cast<std::size_t>(c)] > 0)
                result.centroids.row(c) = (sums.row(c) / static_cast<double>(counts[static_cast<std::size_t>(c)])).cast<float>();
            else
                empty.push_back(c);
        }
        if (!empty.empty()) {
            std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
            std::iota(order.begin(), order.end(), Eigen::Index{0});
            std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
                return dist[static_cast<std::size_t>(a)] > dist[static_cast<std::size_t>(b)];
            });
            for (std::size_t e = 0; e < empty.size() && e < order.size(); ++e) {
                const Eigen::Index far = order[e];
                if (dist[static_cast<std::size_t>(far)] <= 0.0f) break;
                result.centroids.row(empty[e]) = points.row(far);
            }
        }
    }
    return result;
}

}  // namespace fastdco
