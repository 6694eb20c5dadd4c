#include "fastdco/transform.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fastdco {

const char* to_string(RotorKind kind) {
    switch (kind) {
        case RotorKind::pca: return "pca";
        case RotorKind::random: return "random";
        case RotorKind::identity: return "identity";
    }
    return "unknown";
}

int QueryContext::checkpoint_index(int d) const {
    auto it = std::lower_bound(checkpoints.begin(), checkpoints.end(), d);
    if (it == checkpoints.end() || *it != d) return -1;
    return static_cast<int>(it - checkpoints.begin());
}

namespace {

std::vector<Eigen::Index> sample_rows(Eigen::Index n, Eigen::Index count, std::uint64_t seed) {
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    if (count < n) {
        std::mt19937_64 rng(seed);
        // partial Fisher-Yates
        for (Eigen::Index i = 0; i < count; ++i) {
            std::uniform_int_distribution<Eigen::Index> pick(i, n - 1);
            std::swap(rows[static_cast<std::size_t>(i)], rows[static_cast<std::size_t>(pick(rng))]);
        }
        rows.resize(static_cast<std::size_t>(count));
        std::sort(rows.begin(), rows.end());
    }
    return rows;
}

}  // namespace

Rotor fit_pca(const Dataset& data, std::optional<Eigen::Index> sample_size, std::uint64_t seed) {
    const Eigen::Index n = data.rows();
    const Eigen::Index dim = data.cols();
    require(n >= 2, "PCA needs at least two vectors");
    const Eigen::Index count = sample_size.value_or(n);
    require(count >= 2 && count <= n, "PCA sample size must be in [2, n]");

    const auto rows = sample_rows(n, count, seed);
    RowMatrixXd sample(count, dim);
    for (Eigen::Index i = 0; i < count; ++i) sample.row(i) = data.row(rows[static_cast<std::size_t>(i)]).cast<double>();

    const Eigen::RowVectorXd mean = sample.colwise().mean();
    sample.rowwise() -= mean;
    const Eigen::MatrixXd cov = (sample.transpose() * sample) / static_cast<double>(count);

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    require(solver.info() == Eigen::Success, "covariance eigendecomposition failed");

    // Eigen returns ascending eigenvalues; projection order is descending.
    Rotor rotor;
    rotor.kind = RotorKind::pca;
    rotor.mean = mean.transpose().cast<float>();
    rotor.rotation.resize(dim, dim);
    rotor.sigma2.resize(dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
        const Eigen::Index src = dim - 1 - k;
        Eigen::VectorXd dir = solver.eigenvectors().col(src);
        Eigen::Index pivot = 0;
        dir.cwiseAbs().maxCoeff(&pivot);
        if (dir(pivot) < 0) dir = -dir;
        rotor.rotation.row(k) = dir.transpose().cast<float>();
        rotor.sigma2(k) = static_cast<float>(std::max(0.0, solver.eigenvalues()(src)));
    }
    return rotor;
}

Rotor fit_random_rotor(int dim, std::uint64_t seed) {
    require(dim >= 1, "rotor dimension must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Eigen::MatrixXd g(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) g(i, j) = gauss(rng);

    Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
    Eigen::MatrixXd q = qr.householderQ();
    const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
    // Sign fix makes the distribution uniform over the orthogonal group.
    for (int j = 0; j < dim; ++j)
        if (r(j, j) < 0) q.col(j) = -q.col(j);

    Rotor rotor;
    rotor.kind = RotorKind::random;
    rotor.rotation = q.transpose().cast<float>();
    rotor.mean = Eigen::VectorXf::Zero(dim);
    return rotor;
}

Rotor make_identity_rotor(int dim) {
    require(dim >= 1, "rotor dimension must be positive");
    Rotor rotor;
    rotor.kind = RotorKind::identity;
    rotor.rotation = RowMatrixXf::Identity(dim, dim);
    rotor.mean = Eigen::VectorXf::Zero(dim);
    return rotor;
}

Rotor measure_sigma2(Rotor rotor, const Dataset& data) {
    require(data.cols() == rotor.dim(), "dataset dimension differs from rotor dimension",
            ErrorCode::dimension_mismatch);
    require(data.rows() >= 1, "empty dataset");
    const Eigen::Index dim = data.cols();
    Eigen::VectorXd sum = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd sum_sq = Eigen::VectorXd::Zero(dim);
    const Eigen::MatrixXd rot = rotor.rotation.cast<double>();
    const Eigen::VectorXd mean = rotor.mean.cast<double>();
    constexpr Eigen::Index block = 4096;
    for (Eigen::Index start = 0; start < data.rows(); start += block) {
        const Eigen::Index rows = std::min(block, data.rows() - start);
        RowMatrixXd centered = data.middleRows(start, rows).cast<double>();
        centered.rowwise() -= mean.transpose();
        const RowMatrixXd rotated = centered * rot.transpose();
        sum += rotated.colwise().sum().transpose();
        sum_sq += rotated.array().square().colwise().sum().matrix().transpose();
    }
    const double n = static_cast<double>(data.rows());
    const Eigen::VectorXd mu = sum / n;
    rotor.sigma2 = (sum_sq / n - mu.cwiseAbs2()).cwiseMax(0.0).cast<float>();
    return rotor;
}

Eigen::VectorXf apply(const Rotor& rotor, const Eigen::Ref<const Eigen::VectorXf>& v) {
    require(v.size() == rotor.dim(), "vector length differs from rotor dimension", ErrorCode::dimension_mismatch);
    return rotor.rotation * (v - rotor.mean);
}

RowMatrixXf apply_rows(const Rotor& rotor, const Dataset& data) {
    require(data.cols() == rotor.dim(), "dataset dimension differs from rotor dimension",
            ErrorCode::dimension_mismatch);
    RowMatrixXf centered = data;
    centered.rowwise() -= rotor.mean.transpose();
    return centered * rotor.rotation.transpose();
}

std::vector<int> make_checkpoints(int dim, int delta_d) {
    require(delta_d >= 1 && delta_d <= dim, "delta_d must be in [1, D]");
    std::vector<int> cps;
    for (int d = delta_d; d < dim; d += delta_d) cps.push_back(d);
    cps.push_back(dim);
    return cps;
}

QueryContext make_query_context_rotated(const Rotor& rotor, Eigen::VectorXf q_rot, int delta_d) {
    require(q_rot.size() == rotor.dim(), "query length differs from rotor dimension", ErrorCode::dimension_mismatch);
    QueryContext ctx;
    ctx.delta_d = delta_d;
    ctx.checkpoints = make_checkpoints(rotor.dim(), delta_d);
    ctx.q_norm2 = q_rot.squaredNorm();

    const std::size_t num = ctx.checkpoints.size();
    ctx.sigma_suffix.assign(num, 0.0f);
    ctx.sigma.assign(num, 0.0f);
    if (rotor.has_sigma2()) {
        // suffix[i] = sum_{j >= i} q_j^2 sigma2_j, accumulated from the tail
        const int dim = rotor.dim();
        std::vector<double> suffix(static_cast<std::size_t>(dim) + 1, 0.0);
        for (int i = dim - 1; i >= 0; --i) {
            const double qi = q_rot(i);
            suffix[static_cast<std::size_t>(i)] = suffix[static_cast<std::size_t>(i) + 1] + qi * qi * rotor.sigma2(i);
        }
        for (std::size_t c = 0; c < num; ++c) {
            const double var = 4.0 * suffix[static_cast<std::size_t>(ctx.checkpoints[c])];
            ctx.sigma_suffix[c] = static_cast<float>(var);
            ctx.sigma[c] = static_cast<float>(std::sqrt(var));
        }
    }
    ctx.q_rot = std::move(q_rot);
    return ctx;
}

QueryContext make_query_context(const Rotor& rotor, const Eigen::Ref<const Eigen::VectorXf>& q, int delta_d) {
    return make_query_context_rotated(rotor, apply(rotor, q), delta_d);
}

Eigen::VectorXf norms2(const Dataset& data, const Rotor& rotor) {
    require(data.cols() == rotor.dim(), "dataset dimension differs from rotor dimension",
            ErrorCode::dimension_mismatch);
    Eigen::VectorXf out(data.rows());
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        out(i) = static_cast<float>((data.row(i).cast<double>() - rotor.mean.transpose().cast<double>()).squaredNorm());
    return out;
}

void write_rotor(BinaryWriter& out, const Rotor& rotor) {
    const int dim = rotor.dim();
    out.put<std::int32_t>(dim);
    out.put<std::int32_t>(static_cast<std::int32_t>(rotor.kind));
    out.put_matrix(rotor.mean);
    out.put_matrix(rotor.rotation);
    out.put<std::int32_t>(rotor.has_sigma2() ? 1 : 0);
    if (rotor.has_sigma2()) out.put_matrix(rotor.sigma2);
}

Rotor read_rotor(BinaryReader& in) {
    Rotor rotor;
    const auto dim = in.get_count(1 << 16);
    require(dim >= 1, "rotor dimension must be positive", ErrorCode::format_error);
    const auto kind = in.get<std::int32_t>();
    require(kind >= 0 && kind <= 2, "unknown rotor kind", ErrorCode::format_error);
    rotor.kind = static_cast<RotorKind>(kind);
    rotor.mean = in.get_vector<float>(dim);
    rotor.rotation = in.get_matrix<float>(dim, dim);
    if (in.get<std::int32_t>() != 0) rotor.sigma2 = in.get_vector<float>(dim);
    return rotor;
}

void save_rotor(const Rotor& rotor, const std::string& path) {
    BinaryWriter out(path);
    write_rotor(out, rotor);
    out.close();
}

Rotor load_rotor(const std::string& path) {
    BinaryReader in(path);
    return read_rotor(in);
}

}  // namespace fastdco
