#include "fastdco/transform.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <unistd.h>

using namespace fastdco;

namespace {

void check_orthogonal(const RowMatrixXf& r, double tol) {
    const Eigen::MatrixXd rr = r.cast<double>() * r.cast<double>().transpose();
    CHECK((rr - Eigen::MatrixXd::Identity(r.rows(), r.rows())).cwiseAbs().maxCoeff() <= tol);
}

/// Data with per-axis standard deviations `stddev`, no rotation.
RowMatrixXf axis_gaussian(Eigen::Index n, const std::vector<double>& stddev, std::uint64_t seed) {
    RowMatrixXf m = testing::gaussian(n, static_cast<Eigen::Index>(stddev.size()), seed);
    for (std::size_t j = 0; j < stddev.size(); ++j) m.col(static_cast<Eigen::Index>(j)) *= static_cast<float>(stddev[j]);
    return m;
}

}  // namespace

TEST_CASE("fit_pca finds the dominant axis") {
    const RowMatrixXf data = axis_gaussian(20000, {10.0, 0.1}, 1);
    const Rotor r = fit_pca(data);
    CHECK(r.kind == RotorKind::pca);
    CHECK(std::abs(r.rotation(0, 0)) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(r.sigma2(0) == doctest::Approx(100.0).epsilon(0.05));
    CHECK(r.sigma2(1) == doctest::Approx(0.01).epsilon(0.05));
    check_orthogonal(r.rotation, 1e-4);

    // apply is R (v - mean)
    Eigen::VectorXf v(2);
    v << 10.0f, 0.0f;
    const Eigen::VectorXf out = apply(r, v);
    const Eigen::VectorXf oracle = (r.rotation.cast<double>() * (v - r.mean).cast<double>()).cast<float>();
    CHECK((out - oracle).cwiseAbs().maxCoeff() <= 1e-4f);
    CHECK(std::abs(out(0)) == doctest::Approx(std::abs(10.0f - r.mean(0))).epsilon(1e-3));
}

TEST_CASE("fit_pca on isotropic data has unit eigenvalues") {
    const RowMatrixXf data = testing::gaussian(50000, 8, 2);
    const Rotor r = fit_pca(data);
    for (int i = 0; i < 8; ++i) CHECK(r.sigma2(i) == doctest::Approx(1.0).epsilon(0.05));
    for (int i = 1; i < 8; ++i) CHECK(r.sigma2(i - 1) >= r.sigma2(i));
}

TEST_CASE("fit_pca degenerate inputs") {
    SUBCASE("identical points") {
        RowMatrixXf data = RowMatrixXf::Constant(10, 3, 2.5f);
        const Rotor r = fit_pca(data);
        CHECK(r.sigma2.cwiseAbs().maxCoeff() == 0.0f);
        check_orthogonal(r.rotation, 1e-4);
    }
    SUBCASE("single point") { CHECK_THROWS_AS(fit_pca(RowMatrixXf::Zero(1, 3)), Error); }
    SUBCASE("sample size out of range") {
        const RowMatrixXf data = testing::gaussian(10, 3, 3);
        CHECK_THROWS_AS(fit_pca(data, 1), Error);
        CHECK_THROWS_AS(fit_pca(data, 11), Error);
    }
}

TEST_CASE("fit_pca with a row sample is deterministic") {
    const RowMatrixXf data = axis_gaussian(5000, {3.0, 2.0, 1.0, 0.5}, 4);
    const Rotor a = fit_pca(data, 1000, 7);
    const Rotor b = fit_pca(data, 1000, 7);
    CHECK(a.rotation == b.rotation);
    CHECK(a.sigma2 == b.sigma2);
    CHECK(a.sigma2(0) == doctest::Approx(9.0).epsilon(0.15));
}

TEST_CASE("fit_random_rotor") {
    const Rotor a = fit_random_rotor(4, 11);
    const Rotor b = fit_random_rotor(4, 11);
    const Rotor c = fit_random_rotor(4, 12);
    CHECK(a.kind == RotorKind::random);
    check_orthogonal(a.rotation, 1e-6);
    CHECK(a.rotation == b.rotation);
    CHECK(a.rotation != c.rotation);
    CHECK(a.mean.isZero());
    CHECK_FALSE(a.has_sigma2());

    const Rotor one = fit_random_rotor(1, 5);
    CHECK(std::abs(one.rotation(0, 0)) == 1.0f);
    CHECK_THROWS_AS(fit_random_rotor(0, 1), Error);
}

TEST_CASE("apply is an isometry on centered vectors") {
    const RowMatrixXf data = testing::gaussian(200, 16, 5, 2.0f);
    Rotor r = fit_random_rotor(16, 6);
    r.mean = data.colwise().mean().transpose();
    for (Eigen::Index i = 0; i + 1 < data.rows(); i += 2) {
        const Eigen::VectorXf x = data.row(i).transpose();
        const Eigen::VectorXf y = data.row(i + 1).transpose();
        const Eigen::VectorXf rx = apply(r, x);
        CHECK(rx.squaredNorm() == doctest::Approx((x - r.mean).squaredNorm()).epsilon(1e-4));
        CHECK((rx - apply(r, y)).squaredNorm() == doctest::Approx((x - y).squaredNorm()).epsilon(1e-4));
    }
    const RowMatrixXf all = apply_rows(r, data);
    CHECK((all.row(3).transpose() - apply(r, data.row(3).transpose())).cwiseAbs().maxCoeff() <= 1e-5f);

    const Rotor id = make_identity_rotor(16);
    CHECK(apply(id, data.row(0).transpose()) == data.row(0).transpose());
    CHECK_THROWS_AS(apply(id, Eigen::VectorXf::Zero(15)), Error);
}

TEST_CASE("measure_sigma2") {
    SUBCASE("reproduces PCA eigenvalues") {
        const RowMatrixXf data = axis_gaussian(20000, {4.0, 2.0, 1.0, 0.5, 0.25}, 8);
        const Rotor pca = fit_pca(data);
        const Rotor measured = measure_sigma2(pca, data);
        for (int i = 0; i < 5; ++i) CHECK(measured.sigma2(i) == doctest::Approx(pca.sigma2(i)).epsilon(1e-3));
    }
    SUBCASE("constant data") {
        const Rotor r = measure_sigma2(fit_random_rotor(3, 1), RowMatrixXf::Constant(50, 3, -1.0f));
        CHECK(r.sigma2.cwiseAbs().maxCoeff() <= 1e-10f);
    }
    SUBCASE("random rotor on isotropic data") {
        const Rotor r = measure_sigma2(fit_random_rotor(6, 2), testing::gaussian(50000, 6, 9));
        for (int i = 0; i < 6; ++i) CHECK(r.sigma2(i) == doctest::Approx(1.0).epsilon(0.05));
    }
}

TEST_CASE("make_query_context") {
    Rotor r = make_identity_rotor(4);
    r.sigma2 = Eigen::Vector4f(4, 3, 2, 1);

    SUBCASE("hand-computed suffix") {
        const QueryContext ctx = make_query_context(r, Eigen::Vector4f(1, 1, 1, 1), 2);
        REQUIRE(ctx.checkpoints == std::vector<int>{2, 4});
        CHECK(ctx.sigma_suffix[0] == doctest::Approx(12.0));
        CHECK(ctx.sigma_suffix[1] == 0.0f);
        CHECK(ctx.sigma[0] == doctest::Approx(std::sqrt(12.0)));
        CHECK(ctx.q_norm2 == doctest::Approx(4.0));
    }
    SUBCASE("delta_d = D") {
        const QueryContext ctx = make_query_context(r, Eigen::Vector4f(1, 2, 3, 4), 4);
        CHECK(ctx.checkpoints == std::vector<int>{4});
        CHECK(ctx.sigma_suffix == std::vector<float>{0.0f});
    }
    SUBCASE("zero query") {
        const QueryContext ctx = make_query_context(r, Eigen::Vector4f::Zero(), 1);
        for (const float s : ctx.sigma_suffix) CHECK(s == 0.0f);
    }
    SUBCASE("short last block") {
        const QueryContext ctx = make_query_context(r, Eigen::Vector4f(1, 1, 1, 1), 3);
        CHECK(ctx.checkpoints == std::vector<int>{3, 4});
        CHECK(ctx.checkpoint_index(3) == 0);
        CHECK(ctx.checkpoint_index(2) == -1);
    }
    SUBCASE("invalid delta_d") {
        CHECK_THROWS_AS(make_query_context(r, Eigen::Vector4f::Zero(), 0), Error);
        CHECK_THROWS_AS(make_query_context(r, Eigen::Vector4f::Zero(), 5), Error);
    }
}

TEST_CASE("query context invariants on fitted rotors") {
    const RowMatrixXf data = axis_gaussian(3000, {3, 2.5, 2, 1.5, 1, 0.8, 0.6, 0.4, 0.3, 0.2}, 10);
    const Rotor r = fit_pca(data);
    const RowMatrixXf queries = testing::gaussian(20, 10, 11);
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        const Eigen::VectorXf q = queries.row(i).transpose();
        const QueryContext ctx = make_query_context(r, q, 3);
        for (std::size_t c = 1; c < ctx.sigma_suffix.size(); ++c) CHECK(ctx.sigma_suffix[c] <= ctx.sigma_suffix[c - 1]);
        CHECK(ctx.sigma_suffix.back() == 0.0f);
        CHECK(ctx.q_norm2 == doctest::Approx((q - r.mean).squaredNorm()).epsilon(1e-4));
    }
}

TEST_CASE("norms2") {
    const RowMatrixXf data = testing::gaussian(100, 7, 12);
    Rotor r = fit_random_rotor(7, 13);
    r.mean = data.row(5).transpose();
    const Eigen::VectorXf n = norms2(data, r);
    CHECK(n(5) == 0.0f);
    const RowMatrixXf rotated = apply_rows(r, data);
    for (Eigen::Index i = 0; i < data.rows(); ++i)
        CHECK(n(i) == doctest::Approx(rotated.row(i).squaredNorm()).epsilon(1e-4));

    Rotor id = make_identity_rotor(3);
    RowMatrixXf unit(1, 3);
    unit << 0, 1, 0;
    CHECK(norms2(unit, id)(0) == doctest::Approx(1.0));
}

TEST_CASE("rotor files round trip") {
    testing::TempFile f("rotor");
    for (const Rotor& r : {fit_pca(testing::gaussian(100, 5, 1)), fit_random_rotor(5, 3),
                           measure_sigma2(fit_random_rotor(5, 3), testing::gaussian(100, 5, 2))}) {
        save_rotor(r, f.path());
        const Rotor back = load_rotor(f.path());
        CHECK(back.kind == r.kind);
        CHECK(back.rotation == r.rotation);
        CHECK(back.mean == r.mean);
        CHECK(back.sigma2 == r.sigma2);
        CHECK(back.has_sigma2() == r.has_sigma2());
    }
    testing::write_bytes(f.path(), "xx");
    CHECK_THROWS_AS(load_rotor(f.path()), Error);
}
