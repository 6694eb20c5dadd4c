#include "fastdco/vecio.hpp"

#include <cmath>
#include <cstring>
#include <iterator>
#include <filesystem>
#include <fstream>
#include <numeric>

namespace fastdco {

namespace {

template <typename Scalar>
RowMatrix<Scalar> read_vecs(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::io_failure, "cannot open " + path);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    std::size_t pos = 0;
    std::int32_t dim = -1;
    std::vector<Scalar> values;
    Eigen::Index n = 0;
    while (pos < bytes.size()) {
        std::int32_t d = 0;
        if (bytes.size() - pos < sizeof(d))
            throw Error(ErrorCode::truncated_file, "truncated record header in " + path);
        std::memcpy(&d, bytes.data() + pos, sizeof(d));
        pos += sizeof(d);
        if (dim < 0) {
            if (d < 1) throw Error(ErrorCode::format_error, "non-positive dimension in " + path);
            dim = d;
        } else if (d != dim) {
            throw Error(ErrorCode::dimension_mismatch,
                        "record " + std::to_string(n) + " has dimension " + std::to_string(d) +
                            ", expected " + std::to_string(dim) + " in " + path);
        }
        const std::size_t payload = static_cast<std::size_t>(dim) * sizeof(Scalar);
        if (bytes.size() - pos < payload)
            throw Error(ErrorCode::truncated_file, "truncated record payload in " + path);
        const std::size_t old = values.size();
        values.resize(old + static_cast<std::size_t>(dim));
        std::memcpy(values.data() + old, bytes.data() + pos, payload);
        pos += payload;
        ++n;
    }
    if (n == 0) throw Error(ErrorCode::truncated_file, "empty file: " + path);

    RowMatrix<Scalar> out(n, dim);
    std::memcpy(out.data(), values.data(), values.size() * sizeof(Scalar));
    return out;
}

template <typename Scalar>
void write_vecs(const RowMatrix<Scalar>& data, const std::string& path) {
    BinaryWriter out(path);
    const auto dim = static_cast<std::int32_t>(data.cols());
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        out.put(dim);
        out.put_array(std::span<const Scalar>(data.row(i).data(), static_cast<std::size_t>(dim)));
    }
    out.close();
}

}  // namespace

Dataset read_fvecs(const std::string& path) {
    Dataset data = read_vecs<float>(path);
    if (!data.allFinite()) {
        for (Eigen::Index i = 0; i < data.rows(); ++i)
            if (!data.row(i).allFinite())
                throw Error(ErrorCode::non_finite_value,
                            "non-finite value in record " + std::to_string(i) + " of " + path);
    }
    return data;
}

void write_fvecs(const Dataset& data, const std::string& path) { write_vecs<float>(data, path); }

RowMatrixXi read_ivecs(const std::string& path) { return read_vecs<std::int32_t>(path); }

void write_ivecs(const RowMatrixXi& data, const std::string& path) { write_vecs<std::int32_t>(data, path); }

GroundTruth brute_force_knn(const Dataset& data, const Dataset& queries, int k) {
    require(queries.cols() == data.cols(), "query dimension differs from dataset dimension",
            ErrorCode::dimension_mismatch);
    require(k >= 1 && k <= data.rows(), "K must be in [1, n]");

    const Eigen::Index n = data.rows();
    GroundTruth gt;
    gt.ids.resize(queries.rows(), k);
    gt.dists.resize(queries.rows(), k);

    std::vector<std::pair<double, VectorId>> scored(static_cast<std::size_t>(n));
    for (Eigen::Index qi = 0; qi < queries.rows(); ++qi) {
        const auto q = queries.row(qi);
        for (Eigen::Index i = 0; i < n; ++i)
            scored[static_cast<std::size_t>(i)] = {squared_l2_accurate(data.row(i), q), static_cast<VectorId>(i)};
        std::partial_sort(scored.begin(), scored.begin() + k, scored.end());
        for (int j = 0; j < k; ++j) {
            gt.ids(qi, j) = scored[static_cast<std::size_t>(j)].second;
            gt.dists(qi, j) = static_cast<float>(scored[static_cast<std::size_t>(j)].first);
        }
    }
    return gt;
}

void write_ground_truth(const GroundTruth& gt, const std::string& path) {
    write_ivecs(gt.ids, path);
    write_fvecs(gt.dists, path + ".dist.fvecs");
}

GroundTruth read_ground_truth(const std::string& path) {
    GroundTruth gt;
    gt.ids = read_ivecs(path);
    const std::string dist_path = path + ".dist.fvecs";
    if (std::filesystem::exists(dist_path)) {
        gt.dists = read_fvecs(dist_path);
        require(gt.dists.rows() == gt.ids.rows() && gt.dists.cols() == gt.ids.cols(),
                "ground-truth distance file does not match id file", ErrorCode::dimension_mismatch);
    }
    return gt;
}

}  // namespace fastdco
