#include "fastdco/quant.hpp"
#include "fastdco/transform.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fastdco {

Eigen::VectorXf Codebook::rotate(const Eigen::Ref<const Eigen::VectorXf>& v) const {
    require(v.size() == dim, "vector length differs from codebook dimension", ErrorCode::dimension_mismatch);
    if (rotation) return *rotation * v;
    return v;
}

namespace {

void check_pq_shape(Eigen::Index dim, int num_subspaces, int nbits) {
    require(num_subspaces >= 1 && dim % num_subspaces == 0, "num_subspaces must divide D",
            ErrorCode::dimension_mismatch);
    require(nbits >= 1 && nbits <= 8, "nbits must be in [1, 8]");
}

RowMatrixXf rotate_rows(const Dataset& data, const std::optional<RowMatrixXf>& rotation) {
    if (!rotation) return data;
    return data * rotation->transpose();
}

Codebook train_subspaces(const RowMatrixXf& rotated, int num_subspaces, int nbits, std::uint64_t seed,
                         int max_iters, const Codebook* warm) {
    Codebook cb;
    cb.dim = static_cast<int>(rotated.cols());
    cb.num_subspaces = num_subspaces;
    cb.nbits = nbits;
    const int sub = cb.sub_dim();
    for (int s = 0; s < num_subspaces; ++s) {
        const RowMatrixXf block = rotated.middleCols(static_cast<Eigen::Index>(s) * sub, sub);
        KMeansOptions opts;
        opts.max_iters = max_iters;
        opts.seed = seed + static_cast<std::uint64_t>(s);
        const RowMatrixXf* init = warm != nullptr ? &warm->centroids[static_cast<std::size_t>(s)] : nullptr;
        cb.centroids.push_back(kmeans(block, cb.ksub(), opts, init).centroids);
    }
    return cb;
}

Dataset take_sample(const Dataset& data, Eigen::Index count, std::uint64_t seed) {
    if (count >= data.rows()) return data;
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(data.rows()));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    std::shuffle(rows.begin(), rows.end(), rng);
    rows.resize(static_cast<std::size_t>(count));
    std::sort(rows.begin(), rows.end());
    Dataset out(count, data.cols());
    for (Eigen::Index i = 0; i < count; ++i) out.row(i) = data.row(rows[static_cast<std::size_t>(i)]);
    return out;
}

RowMatrixXf reconstruct_rows(const Codebook& cb, const RowMatrixXf& rotated) {
    RowMatrixXf out(rotated.rows(), rotated.cols());
    for (Eigen::Index i = 0; i < rotated.rows(); ++i) {
        const PqCode code = pq_encode_rotated(cb, rotated.row(i).transpose());
        out.row(i) = reconstruct(cb, code).transpose();
    }
    return out;
}

}  // namespace

Codebook pq_train(const Dataset& data, int num_subspaces, int nbits, std::uint64_t seed, int max_iters) {
    check_pq_shape(data.cols(), num_subspaces, nbits);
    return train_subspaces(data, num_subspaces, nbits, seed, max_iters, nullptr);
}

RowMatrixXf procrustes_rotation(const RowMatrixXf& x, const RowMatrixXf& y) {
    require(x.rows() == y.rows() && x.cols() == y.cols(), "Procrustes inputs differ in shape",
            ErrorCode::dimension_mismatch);
    const Eigen::MatrixXd m = y.cast<double>().transpose() * x.cast<double>();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Eigen::MatrixXd r = svd.matrixU() * svd.matrixV().transpose();
    return r.cast<float>();
}

RowMatrixXf eigenvalue_allocation(const Rotor& pca, int num_subspaces) {
    require(pca.has_sigma2(), "eigenvalue allocation needs per-axis variances");
    check_pq_shape(pca.dim(), num_subspaces, 1);
    const int sub = pca.dim() / num_subspaces;
    std::vector<int> order(static_cast<std::size_t>(pca.dim()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return pca.sigma2(a) > pca.sigma2(b); });

    // log eigenvalues relative to the smallest, so an empty subspace always wins
    const double top = std::max(static_cast<double>(pca.sigma2.maxCoeff()), 1e-30);
    const double floor = std::max(static_cast<double>(pca.sigma2.minCoeff()), top * 1e-12);
    std::vector<std::vector<int>> buckets(static_cast<std::size_t>(num_subspaces));
    std::vector<double> log_product(static_cast<std::size_t>(num_subspaces), 0.0);
    for (const int axis : order) {
        std::size_t best = buckets.size();
        for (std::size_t b = 0; b < buckets.size(); ++b)
            if (static_cast<int>(buckets[b].size()) < sub && (best == buckets.size() || log_product[b] < log_product[best]))
                best = b;
        buckets[best].push_back(axis);
        log_product[best] += std::log(std::max(static_cast<double>(pca.sigma2(axis)), floor) / floor);
    }
    RowMatrixXf rotation(pca.dim(), pca.dim());
    Eigen::Index row = 0;
    for (const auto& bucket : buckets)
        for (const int axis : bucket) rotation.row(row++) = pca.rotation.row(axis);
    return rotation;
}

OpqResult opq_train(const Dataset& data, int num_subspaces, int nbits, const OpqOptions& options) {
    check_pq_shape(data.cols(), num_subspaces, nbits);
    require(options.outer_iters >= 1, "OPQ needs at least one outer iteration");
    const Dataset sample = take_sample(data, options.sample_size, options.seed);

    OpqResult result;
    Codebook& cb = result.codebook;
    cb.rotation = eigenvalue_allocation(fit_pca(sample), num_subspaces);
    double current = 0.0;

    for (int outer = 0; outer < options.outer_iters; ++outer) {
        // (a) codebook for the current rotation
        const RowMatrixXf rotated = rotate_rows(sample, cb.rotation);
        if (outer == 0) {
            auto fresh = train_subspaces(rotated, num_subspaces, nbits, options.seed, options.kmeans_iters, nullptr);
            fresh.rotation = cb.rotation;
            cb = std::move(fresh);
            current = quantization_error(cb, sample);
        } else {
            auto refined = train_subspaces(rotated, num_subspaces, nbits, options.seed, options.inner_iters, &cb);
            refined.rotation = cb.rotation;
            const double err = quantization_error(refined, sample);
            if (err <= current) {
                cb = std::move(refined);
                current = err;
            }
        }

        // (b) rotation for the current codes
        const RowMatrixXf recon = reconstruct_rows(cb, rotate_rows(sample, cb.rotation));
        Codebook candidate = cb;
        candidate.rotation = procrustes_rotation(sample, recon);
        const double err = quantization_error(candidate, sample);
        if (err <= current) {
            cb = std::move(candidate);
            current = err;
        }
        result.objective.push_back(current);
    }
    return result;
}

PqCode pq_encode_rotated(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXf>& v_rot) {
    require(v_rot.size() == codebook.dim, "vector length differs from codebook dimension",
            ErrorCode::dimension_mismatch);
    const int sub = codebook.sub_dim();
    PqCode code(static_cast<std::size_t>(codebook.num_subspaces));
    for (int s = 0; s < codebook.num_subspaces; ++s) {
        const auto [c, d] = nearest_centroid(codebook.centroids[static_cast<std::size_t>(s)],
                                             v_rot.segment(static_cast<Eigen::Index>(s) * sub, sub).transpose());
        (void)d;
        code[static_cast<std::size_t>(s)] = static_cast<std::uint8_t>(c);
    }
    return code;
}

PqCode pq_encode(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXf>& v) {
    return pq_encode_rotated(codebook, codebook.rotate(v));
}

Eigen::VectorXf reconstruct(const Codebook& codebook, const PqCode& code) {
    require(code.size() == static_cast<std::size_t>(codebook.num_subspaces), "code length differs from num_subspaces",
            ErrorCode::dimension_mismatch);
    const int sub = codebook.sub_dim();
    Eigen::VectorXf out(codebook.dim);
    for (int s = 0; s < codebook.num_subspaces; ++s) {
        const int c = code[static_cast<std::size_t>(s)];
        require(c < codebook.ksub(), "code index out of range");
        out.segment(static_cast<Eigen::Index>(s) * sub, sub) =
            codebook.centroids[static_cast<std::size_t>(s)].row(c).transpose();
    }
    return out;
}

LookupTable build_lut(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXf>& q) {
    const Eigen::VectorXf q_rot = codebook.rotate(q);
    const int sub = codebook.sub_dim();
    LookupTable lut(codebook.num_subspaces, codebook.ksub());
    for (int s = 0; s < codebook.num_subspaces; ++s) {
        const auto& cents = codebook.centroids[static_cast<std::size_t>(s)];
        const Eigen::RowVectorXf qs = q_rot.segment(static_cast<Eigen::Index>(s) * sub, sub).transpose();
        for (Eigen::Index c = 0; c < cents.rows(); ++c) lut(s, c) = (cents.row(c) - qs).squaredNorm();
    }
    return lut;
}

float adc(const LookupTable& lut, const std::uint8_t* code) {
    float acc = 0.0f;
    for (Eigen::Index s = 0; s < lut.rows(); ++s) acc += lut(s, code[s]);
    return acc;
}

float adc(const LookupTable& lut, const PqCode& code) {
    require(code.size() == static_cast<std::size_t>(lut.rows()), "code length differs from lookup table",
            ErrorCode::dimension_mismatch);
    for (auto c : code) require(c < lut.cols(), "code index out of range");
    return adc(lut, code.data());
}

float code_residual(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXf>& v, const PqCode& code) {
    return (codebook.rotate(v) - reconstruct(codebook, code)).squaredNorm();
}

double quantization_error(const Codebook& codebook, const Dataset& data) {
    require(data.cols() == codebook.dim, "dataset dimension differs from codebook dimension",
            ErrorCode::dimension_mismatch);
    const RowMatrixXf rotated = rotate_rows(data, codebook.rotation);
    const int sub = codebook.sub_dim();
    double total = 0.0;
    for (Eigen::Index i = 0; i < rotated.rows(); ++i) {
        for (int s = 0; s < codebook.num_subspaces; ++s) {
            total += nearest_centroid(codebook.centroids[static_cast<std::size_t>(s)],
                                      rotated.row(i).segment(static_cast<Eigen::Index>(s) * sub, sub))
                         .second;
        }
    }
    return total;
}

PackedCodes::PackedCodes(Eigen::Index n, int num_subspaces, int nbits)
    : n_(n), num_subspaces_(num_subspaces), nbits_(nbits) {
    require(nbits >= 1 && nbits <= 8, "nbits must be in [1, 8]");
    bytes_.assign(static_cast<std::size_t>((size_bits() + 7) / 8), 0);
}

std::uint64_t PackedCodes::size_bits() const {
    return static_cast<std::uint64_t>(n_) * static_cast<std::uint64_t>(num_subspaces_) *
           static_cast<std::uint64_t>(nbits_);
}

void PackedCodes::set(Eigen::Index i, const PqCode& code) {
    require(code.size() == static_cast<std::size_t>(num_subspaces_), "code length differs from num_subspaces",
            ErrorCode::dimension_mismatch);
    std::uint64_t bit = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(num_subspaces_) * nbits_;
    for (auto value : code) {
        require(value < (1u << nbits_), "code index out of range");
        for (int b = 0; b < nbits_; ++b, ++bit) {
            auto& byte = bytes_[bit >> 3];
            const auto mask = static_cast<std::uint8_t>(1u << (bit & 7));
            if ((value >> b) & 1u) byte |= mask;
            else byte &= static_cast<std::uint8_t>(~mask);
        }
    }
}

PqCode PackedCodes::get(Eigen::Index i) const {
    PqCode code(static_cast<std::size_t>(num_subspaces_));
    if (nbits_ == 8) {
        const auto* p = bytes_.data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(num_subspaces_);
        std::copy(p, p + num_subspaces_, code.begin());
        return code;
    }
    std::uint64_t bit = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(num_subspaces_) * nbits_;
    for (auto& value : code) {
        unsigned v = 0;
        for (int b = 0; b < nbits_; ++b, ++bit)
            v |= static_cast<unsigned>((bytes_[bit >> 3] >> (bit & 7)) & 1u) << b;
        value = static_cast<std::uint8_t>(v);
    }
    return code;
}

void write_codebook(BinaryWriter& out, const Codebook& codebook) {
    out.put<std::int32_t>(codebook.dim);
    out.put<std::int32_t>(codebook.num_subspaces);
    out.put<std::int32_t>(codebook.nbits);
    out.put<std::int32_t>(codebook.rotation ? 1 : 0);
    if (codebook.rotation) out.put_matrix(*codebook.rotation);
    for (const auto& c : codebook.centroids) out.put_matrix(c);
}

Codebook read_codebook(BinaryReader& in) {
    Codebook cb;
    cb.dim = in.get_count(1 << 16);
    cb.num_subspaces = in.get_count(1 << 16);
    cb.nbits = in.get_count(8);
    check_pq_shape(cb.dim, cb.num_subspaces, cb.nbits);
    if (in.get<std::int32_t>() != 0) cb.rotation = in.get_matrix<float>(cb.dim, cb.dim);
    for (int s = 0; s < cb.num_subspaces; ++s) cb.centroids.push_back(in.get_matrix<float>(cb.ksub(), cb.sub_dim()));
    return cb;
}

void save_codebook(const Codebook& codebook, const std::string& path) {
    BinaryWriter out(path);
    write_codebook(out, codebook);
    out.close();
}

Codebook load_codebook(const std::string& path) {
    BinaryReader in(path);
    return read_codebook(in);
}

}  // namespace fastdco
