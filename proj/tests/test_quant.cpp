#include "fastdco/bench.hpp"
#include "fastdco/quant.hpp"
#include "fastdco/transform.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace fastdco;

TEST_CASE("kmeans with k = n puts every point on its own centroid") {
    const RowMatrixXf pts = testing::gaussian(12, 3, 1);
    const KMeansResult r = kmeans(pts, 12, {25, 3});
    CHECK(r.objective.back() == 0.0);
    std::set<int> used(r.assignment.begin(), r.assignment.end());
    CHECK(used.size() == 12);
}

TEST_CASE("kmeans recovers two separated blobs") {
    RowMatrixXf pts = testing::gaussian(400, 2, 2, 0.3f);
    pts.topRows(200).rowwise() += Eigen::RowVector2f(10, 10);
    pts.bottomRows(200).rowwise() += Eigen::RowVector2f(-10, 0);
    const Eigen::RowVector2f m0 = pts.topRows(200).colwise().mean();
    const Eigen::RowVector2f m1 = pts.bottomRows(200).colwise().mean();
    const KMeansResult r = kmeans(pts, 2, {25, 5});
    const float a = std::min((r.centroids.row(0) - m0).norm(), (r.centroids.row(1) - m0).norm());
    const float b = std::min((r.centroids.row(0) - m1).norm(), (r.centroids.row(1) - m1).norm());
    CHECK(a <= 0.1f);
    CHECK(b <= 0.1f);
}

TEST_CASE("kmeans objective never increases and runs are reproducible") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const RowMatrixXf pts = gen_synthetic(SyntheticKind::clustered, 2000, 8, seed);
        const KMeansResult r = kmeans(pts, 20, {25, seed});
        for (std::size_t t = 1; t < r.objective.size(); ++t) CHECK(r.objective[t] <= r.objective[t - 1]);
        const KMeansResult again = kmeans(pts, 20, {25, seed});
        CHECK(again.assignment == r.assignment);
        CHECK(again.centroids == r.centroids);
    }
}

TEST_CASE("kmeans with more clusters than distinct points duplicates centroids") {
    RowMatrixXf pts(6, 2);
    pts << 0, 0, 0, 0, 1, 1, 1, 1, 0, 0, 1, 1;
    const KMeansResult r = kmeans(pts, 4, {10, 1});
    CHECK(r.centroids.rows() == 4);
    CHECK(r.objective.back() == 0.0);
    CHECK_THROWS_AS(kmeans(pts, 0), Error);
}

TEST_CASE("nearest_centroid breaks ties toward the lower id") {
    RowMatrixXf c(3, 1);
    c << 1, -1, 1;
    const auto [id, d] = nearest_centroid(c, Eigen::RowVectorXf::Zero(1));
    CHECK(id == 0);
    CHECK(d == 1.0f);
}

TEST_CASE("pq_train shapes and errors") {
    const RowMatrixXf data = testing::gaussian(500, 12, 3);
    const Codebook cb = pq_train(data, 3, 4, 1);
    CHECK(cb.sub_dim() == 4);
    CHECK(cb.ksub() == 16);
    CHECK(cb.centroids.size() == 3);
    CHECK_FALSE(cb.rotation.has_value());
    CHECK_THROWS_AS(pq_train(data, 5, 4, 1), Error);
    CHECK_THROWS_AS(pq_train(data, 3, 9, 1), Error);
    CHECK_THROWS_AS(pq_train(data, 3, 0, 1), Error);
}

TEST_CASE("pq on a dataset of 2^nbits repeated vectors is lossless") {
    const RowMatrixXf distinct = testing::gaussian(4, 6, 4);
    RowMatrixXf data(40, 6);
    for (int i = 0; i < 40; ++i) data.row(i) = distinct.row(i % 4);
    const Codebook cb = pq_train(data, 2, 2, 7);
    CHECK(quantization_error(cb, data) == 0.0);
}

TEST_CASE("encoding, lookup tables and asymmetric distance") {
    const RowMatrixXf data = testing::gaussian(2000, 16, 5);
    const Codebook cb = opq_train(data, 4, 6, {3, 4, 25, 2000, 1}).codebook;
    const RowMatrixXf queries = testing::gaussian(10, 16, 6);

    SUBCASE("vector on centroids has zero residual and zero adc") {
        const PqCode code = {1, 2, 3, 4};
        const Eigen::VectorXf on_rot = reconstruct(cb, code);
        const Eigen::VectorXf on = cb.rotation->transpose() * on_rot;  // back to input space
        const PqCode enc = pq_encode(cb, on);
        CHECK(code_residual(cb, on, enc) <= 1e-9f);
        CHECK(adc(build_lut(cb, on), enc) <= 1e-9f);
    }
    SUBCASE("adc equals the naive per-subspace sum and the reconstruction distance") {
        for (Eigen::Index qi = 0; qi < queries.rows(); ++qi) {
            const Eigen::VectorXf q = queries.row(qi).transpose();
            const LookupTable lut = build_lut(cb, q);
            CHECK(lut.minCoeff() >= 0.0f);
            const Eigen::VectorXf q_rot = cb.rotate(q);
            for (Eigen::Index i = 0; i < 200; ++i) {
                const PqCode code = pq_encode(cb, data.row(i).transpose());
                float naive = 0.0f;
                for (int s = 0; s < cb.num_subspaces; ++s) naive += lut(s, code[static_cast<std::size_t>(s)]);
                CHECK(adc(lut, code) == naive);
                const double recon = (q_rot - reconstruct(cb, code)).cast<double>().squaredNorm();
                CHECK(adc(lut, code) == doctest::Approx(recon).epsilon(1e-4));
            }
        }
    }
    SUBCASE("triangle inequality bound with the code residual") {
        for (Eigen::Index i = 0; i < 1000; ++i) {
            const Eigen::VectorXf v = data.row(i).transpose();
            const Eigen::VectorXf q = queries.row(i % 10).transpose();
            const PqCode code = pq_encode(cb, v);
            const double a = adc(build_lut(cb, q), code);
            const double r = code_residual(cb, v, code);
            const double exact = (v - q).cast<double>().squaredNorm();
            const double bound = std::pow(std::sqrt(a) + std::sqrt(r), 2.0);
            CHECK(exact <= bound * (1 + 1e-4) + 1e-6);
        }
    }
    SUBCASE("out-of-range codes") {
        const LookupTable lut = build_lut(cb, queries.row(0).transpose());
        CHECK_THROWS_AS(adc(lut, PqCode{1, 2, 3, 64}), Error);
        CHECK_THROWS_AS(adc(lut, PqCode{1, 2, 3}), Error);
        CHECK_THROWS_AS(reconstruct(cb, PqCode{1, 2, 3, 200}), Error);
    }
}

TEST_CASE("opq_train") {
    const Dataset data = gen_synthetic(SyntheticKind::anisotropic, 4000, 16, 8);
    SUBCASE("objective never increases and the rotation stays orthogonal") {
        const OpqResult r = opq_train(data, 4, 5, {6, 4, 25, 4000, 3});
        REQUIRE(r.objective.size() == 6);
        for (std::size_t t = 1; t < r.objective.size(); ++t) CHECK(r.objective[t] <= r.objective[t - 1]);
        const Eigen::MatrixXd rr = r.codebook.rotation->cast<double>() * r.codebook.rotation->cast<double>().transpose();
        CHECK((rr - Eigen::MatrixXd::Identity(16, 16)).cwiseAbs().maxCoeff() <= 1e-4);
        CHECK(r.objective.back() == doctest::Approx(quantization_error(r.codebook, data)).epsilon(1e-9));
        CHECK(r.objective.back() <= quantization_error(pq_train(data, 4, 5, 3), data));
    }
    SUBCASE("one outer iteration trains PQ on the allocated PCA rotation") {
        // the rotation step may move the rotation afterwards but never the centroids
        const OpqResult r = opq_train(data, 4, 5, {1, 4, 25, 4000, 3});
        const RowMatrixXf rotated = data * eigenvalue_allocation(fit_pca(data), 4).transpose();
        const Codebook pq = pq_train(rotated, 4, 5, 3);
        for (std::size_t s = 0; s < 4; ++s) CHECK(r.codebook.centroids[s] == pq.centroids[s]);
        CHECK(r.objective.back() <= quantization_error(pq, rotated));
    }
}

TEST_CASE("eigenvalue_allocation") {
    Rotor pca = make_identity_rotor(6);
    pca.sigma2.resize(6);
    pca.sigma2 << 1.0f, 32.0f, 8.0f, 4.0f, 2.0f, 16.0f;
    const RowMatrixXf r = eigenvalue_allocation(pca, 2);
    // smallest running product wins, ties to the first subspace: {32, 4, 2} and {16, 8, 1}
    std::vector<int> axes;
    for (Eigen::Index i = 0; i < 6; ++i) {
        Eigen::Index col = 0;
        r.row(i).maxCoeff(&col);
        axes.push_back(static_cast<int>(col));
    }
    CHECK(axes == std::vector<int>{1, 3, 4, 5, 2, 0});
    Rotor scaled = pca;
    scaled.sigma2 *= 1e-4f;
    CHECK(eigenvalue_allocation(scaled, 2) == r);
    CHECK_THROWS_AS(eigenvalue_allocation(make_identity_rotor(6), 2), Error);
    CHECK_THROWS_AS(eigenvalue_allocation(pca, 4), Error);
}

TEST_CASE("procrustes_rotation recovers a known rotation") {
    const RowMatrixXf x = testing::gaussian(200, 5, 9);
    const RowMatrixXf r = fit_random_rotor(5, 10).rotation;
    const RowMatrixXf y = x * r.transpose();
    const RowMatrixXf got = procrustes_rotation(x, y);
    CHECK((got - r).cwiseAbs().maxCoeff() <= 1e-4f);
}

TEST_CASE("packed codes") {
    std::mt19937_64 rng(11);
    for (const int nbits : {1, 3, 5, 8}) {
        const Eigen::Index n = 37;
        const int m = 7;
        PackedCodes packed(n, m, nbits);
        CHECK(packed.size_bits() == static_cast<std::uint64_t>(n) * m * nbits);
        CHECK(packed.bytes().size() == (packed.size_bits() + 7) / 8);
        std::vector<PqCode> codes;
        std::uniform_int_distribution<int> val(0, (1 << nbits) - 1);
        for (Eigen::Index i = 0; i < n; ++i) {
            PqCode c(m);
            for (auto& v : c) v = static_cast<std::uint8_t>(val(rng));
            packed.set(i, c);
            codes.push_back(c);
        }
        for (Eigen::Index i = 0; i < n; ++i) CHECK(packed.get(i) == codes[static_cast<std::size_t>(i)]);
        if (nbits < 8) CHECK_THROWS_AS(packed.set(0, PqCode(m, static_cast<std::uint8_t>(1 << nbits))), Error);
    }
}

TEST_CASE("codebook files round trip") {
    testing::TempFile f("cb");
    const RowMatrixXf data = testing::gaussian(300, 8, 12);
    for (const Codebook& cb : {pq_train(data, 2, 3, 1), opq_train(data, 4, 2, {2, 2, 10, 300, 1}).codebook}) {
        save_codebook(cb, f.path());
        const Codebook back = load_codebook(f.path());
        CHECK(back.dim == cb.dim);
        CHECK(back.num_subspaces == cb.num_subspaces);
        CHECK(back.nbits == cb.nbits);
        CHECK(back.rotation.has_value() == cb.rotation.has_value());
        if (cb.rotation) CHECK(*back.rotation == *cb.rotation);
        for (std::size_t s = 0; s < cb.centroids.size(); ++s) CHECK(back.centroids[s] == cb.centroids[s]);
    }
}
