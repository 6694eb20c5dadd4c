#pragma once

#include "fastdco/common.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace fastdco {

/// Per-query K nearest neighbours, ascending by squared distance.
struct GroundTruth {
    RowMatrixXi ids;    // nq x K
    RowMatrixXf dists;  // nq x K, squared Euclidean

    Eigen::Index num_queries() const { return ids.rows(); }
    Eigen::Index k() const { return ids.cols(); }
};

// fvecs/ivecs: repeated records of int32 d followed by d 4-byte values.
Dataset read_fvecs(const std::string& path);
void write_fvecs(const Dataset& data, const std::string& path);
RowMatrixXi read_ivecs(const std::string& path);
void write_ivecs(const RowMatrixXi& data, const std::string& path);

/// Exact K nearest neighbours by squared L2; ties go to the lower id.
GroundTruth brute_force_knn(const Dataset& data, const Dataset& queries, int k);

/// Squared distances accumulate in double over dimensions in index order.
template <typename DerivedX, typename DerivedQ>
double squared_l2_accurate(const Eigen::MatrixBase<DerivedX>& x, const Eigen::MatrixBase<DerivedQ>& q) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double diff = static_cast<double>(x(i)) - static_cast<double>(q(i));
        acc += diff * diff;
    }
    return acc;
}

/// Writes ids to `<path>` (ivecs) and squared distances to `<path>.dist.fvecs`.
void write_ground_truth(const GroundTruth& gt, const std::string& path);
/// Reads ids and, when the companion distance file exists, the distances.
GroundTruth read_ground_truth(const std::string& path);

}  // namespace fastdco
