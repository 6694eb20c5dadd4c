#include "fastdco/bench.hpp"
#include "fastdco/dco.hpp"
#include "fastdco/vecio.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace fastdco;

namespace {

struct Workload {
    Rotor rotor;
    RowMatrixXf data;  // rotated
    Eigen::VectorXf norms;
    RowMatrixXf queries;  // raw
};

Workload make_workload(int dim, Eigen::Index n, std::uint64_t seed, bool random_rotor = false) {
    Workload w;
    const Dataset raw = gen_synthetic(SyntheticKind::anisotropic, n + 20, dim, seed);
    const Dataset base = raw.topRows(n);
    w.queries = raw.bottomRows(20);
    w.rotor = random_rotor ? measure_sigma2(fit_random_rotor(dim, seed + 1), base) : fit_pca(base);
    w.data = apply_rows(w.rotor, base);
    w.norms = w.data.rowwise().squaredNorm();
    return w;
}

float direct(const Eigen::VectorXf& a, const Eigen::VectorXf& b) {
    return static_cast<float>(squared_l2_accurate(a, b));
}

/// K-th smallest exact distance from the query to all rows.
float kth_distance(const Workload& w, const QueryContext& ctx, int k) {
    std::vector<float> d(static_cast<std::size_t>(w.data.rows()));
    for (Eigen::Index i = 0; i < w.data.rows(); ++i) d[static_cast<std::size_t>(i)] = direct(w.data.row(i), ctx.q_rot);
    std::nth_element(d.begin(), d.begin() + (k - 1), d.end());
    return d[static_cast<std::size_t>(k - 1)];
}

}  // namespace

TEST_CASE("parse_dco_kind and names") {
    for (const char* name : {"exact", "ads", "bsa", "bsa-inc", "learned-pca", "learned-opq"})
        CHECK(std::string(to_string(parse_dco_kind(name))) == name);
    CHECK_THROWS_AS(parse_dco_kind("fast"), Error);
}

TEST_CASE("strategy validation") {
    DcoStrategy s;
    s.kind = DcoKind::bsa_res;
    s.m = 0.0f;
    CHECK_THROWS_AS(s.validate(64, RotorKind::pca, false), Error);
    s.m = 3.0f;
    s.delta_d = 65;
    CHECK_THROWS_AS(s.validate(64, RotorKind::pca, false), Error);
    s.delta_d = 16;
    CHECK_NOTHROW(s.validate(64, RotorKind::pca, false));

    s.kind = DcoKind::ads;
    CHECK_THROWS_AS(s.validate(64, RotorKind::pca, false), Error);
    CHECK_NOTHROW(s.validate(64, RotorKind::random, false));
    s.epsilon0 = 0.0f;
    CHECK_THROWS_AS(s.validate(64, RotorKind::random, false), Error);

    s.kind = DcoKind::learned_proj;
    CHECK_THROWS_AS(s.validate(64, RotorKind::pca, false), Error);
    s.kind = DcoKind::learned_quant;
    s.quant_classifier = std::make_shared<LinearClassifier>(LinearClassifier{1.0f, {0.5f}, 0.0f});
    CHECK_THROWS_AS(s.validate(64, RotorKind::pca, false), Error);
    CHECK_NOTHROW(s.validate(64, RotorKind::pca, true));
}

TEST_CASE("dco_exact") {
    const Workload w = make_workload(32, 500, 1);
    for (Eigen::Index qi = 0; qi < w.queries.rows(); ++qi) {
        const QueryContext ctx = make_query_context(w.rotor, w.queries.row(qi).transpose(), 8);
        const DcoResult self = dco_exact(ctx.q_rot, ctx, ctx.q_rot.squaredNorm());
        CHECK(self.distance == doctest::Approx(0.0).epsilon(1e-4).scale(ctx.q_norm2));
        for (Eigen::Index i = 0; i < w.data.rows(); i += 7) {
            const DcoResult r = dco_exact(w.data.row(i).transpose(), ctx, w.norms(i));
            CHECK_FALSE(r.pruned);
            CHECK(r.used_exact);
            CHECK(r.dims_scanned == 32);
            CHECK(r.distance == doctest::Approx(direct(w.data.row(i), ctx.q_rot)).epsilon(1e-4));
        }
    }
    const QueryContext ctx = make_query_context(w.rotor, w.queries.row(0).transpose(), 8);
    CHECK_THROWS_AS(dco_exact(Eigen::VectorXf::Zero(31), ctx, 0.0f), Error);
}

TEST_CASE("dco_bsa_res") {
    const Workload w = make_workload(64, 2000, 2);
    const float m = 3.0f;
    std::size_t pruned = 0;
    for (Eigen::Index qi = 0; qi < w.queries.rows(); ++qi) {
        const QueryContext ctx = make_query_context(w.rotor, w.queries.row(qi).transpose(), 16);
        const float tau = kth_distance(w, ctx, 10);
        for (Eigen::Index i = 0; i < w.data.rows(); i += 3) {
            const Eigen::VectorXf x = w.data.row(i).transpose();
            const DcoResult exact = dco_exact(x, ctx, w.norms(i));

            // full dimension: decision is exact and the value matches dco_exact bit for bit
            const DcoResult full = dco_bsa_res(x, ctx, w.norms(i), tau, m, 64);
            CHECK(full.pruned == (exact.distance > tau));
            CHECK(full.distance == exact.distance);
            CHECK(full.dims_scanned == 64);

            const DcoResult r = dco_bsa_res(x, ctx, w.norms(i), tau, m, 32);
            if (r.pruned) {
                ++pruned;
                CHECK(r.dims_scanned == 32);
                CHECK_FALSE(r.used_exact);
                CHECK(r.distance - m * ctx.sigma[1] > tau);
            } else {
                CHECK(r.distance == exact.distance);
                CHECK(r.dims_scanned == 64);
            }

            const DcoResult loose = dco_bsa_res(x, ctx, w.norms(i), std::numeric_limits<float>::max(), m, 16);
            CHECK_FALSE(loose.pruned);
            CHECK(loose.distance == exact.distance);
            CHECK_FALSE(dco_bsa_res(x, ctx, w.norms(i), kQueueNotFull, m, 16).pruned);
        }
        CHECK_THROWS_AS(dco_bsa_res(w.data.row(0).transpose(), ctx, w.norms(0), tau, m, 20), Error);
    }
    CHECK(pruned > 0);
}

TEST_CASE("dco_bsa_res_incremental") {
    const Workload w = make_workload(64, 2000, 3);
    const float m = 3.0f;
    std::uint64_t dims = 0, calls = 0;
    for (Eigen::Index qi = 0; qi < w.queries.rows(); ++qi) {
        const QueryContext ctx = make_query_context(w.rotor, w.queries.row(qi).transpose(), 16);
        const float tau = kth_distance(w, ctx, 10);
        for (Eigen::Index i = 0; i < w.data.rows(); ++i) {
            const Eigen::VectorXf x = w.data.row(i).transpose();
            const DcoResult exact = dco_exact(x, ctx, w.norms(i));
            const DcoResult r = dco_bsa_res_incremental(x, ctx, w.norms(i), tau, m);
            dims += static_cast<std::uint64_t>(r.dims_scanned);
            ++calls;
            CHECK(r.dims_scanned <= 64);
            if (r.used_exact) {
                CHECK(r.dims_scanned == 64);
                CHECK(r.distance == exact.distance);
                CHECK(r.pruned == (exact.distance > tau));
            } else {
                CHECK(r.pruned);
                CHECK(r.dims_scanned < 64);
            }
            CHECK_FALSE(dco_bsa_res_incremental(x, ctx, w.norms(i), kQueueNotFull, m).pruned);
        }
    }
    CHECK(static_cast<double>(dims) / static_cast<double>(calls) < 0.5 * 64);
}

TEST_CASE("dco_ads") {
    const Workload w = make_workload(64, 2000, 4, true);
    std::uint64_t false_prunes = 0, calls = 0, pruned = 0;
    for (Eigen::Index qi = 0; qi < w.queries.rows(); ++qi) {
        const QueryContext ctx = make_query_context(w.rotor, w.queries.row(qi).transpose(), 32);
        const float tau = kth_distance(w, ctx, 10);
        for (Eigen::Index i = 0; i < w.data.rows(); ++i) {
            const Eigen::VectorXf x = w.data.row(i).transpose();
            const float truth = direct(x, ctx.q_rot);
            const DcoResult r = dco_ads(x, ctx, tau, 2.1f);
            ++calls;
            if (r.pruned) ++pruned;
            if (r.pruned && truth <= tau) ++false_prunes;
            if (!r.pruned) CHECK(r.distance == doctest::Approx(truth).epsilon(1e-4));
            if (r.used_exact) CHECK(r.pruned == (r.distance > tau));
        }
    }
    CHECK(pruned > 0);
    CHECK(static_cast<double>(false_prunes) / static_cast<double>(calls) <= 0.01);
}

TEST_CASE("Gaussian error calibration at three sigma") {
    // eps = -2 <q_r, x_r> over many x for fixed q: |eps| > 3 sigma should be rare
    const Workload w = make_workload(64, 20000, 5);
    std::uint64_t beyond = 0, total = 0;
    for (Eigen::Index qi = 0; qi < w.queries.rows(); ++qi) {
        const QueryContext ctx = make_query_context(w.rotor, w.queries.row(qi).transpose(), 32);
        const float sigma = ctx.sigma[0];
        for (Eigen::Index i = 0; i < w.data.rows(); ++i) {
            const float eps = -2.0f * w.data.row(i).tail(32).dot(ctx.q_rot.tail(32));
            beyond += std::abs(eps) > 3.0f * sigma ? 1 : 0;
            ++total;
        }
    }
    CHECK(static_cast<double>(beyond) / static_cast<double>(total) <= 0.01);
}

TEST_CASE("learned projection cascade with m1 = 1 and beta = -m sigma reproduces incremental BSA") {
    const Workload w = make_workload(64, 1000, 6);
    const float m = 4.0f;
    for (Eigen::Index qi = 0; qi < w.queries.rows(); ++qi) {
        const QueryContext ctx = make_query_context(w.rotor, w.queries.row(qi).transpose(), 16);
        Cascade cascade;
        cascade.dim = 64;
        cascade.delta_d = 16;
        for (std::size_t c = 0; c + 1 < ctx.checkpoints.size(); ++c)
            cascade.stages.push_back({ctx.checkpoints[c], 1.0f, LinearClassifier{1.0f, {}, -m * ctx.sigma[c]}});
        const float tau = kth_distance(w, ctx, 10);
        for (Eigen::Index i = 0; i < w.data.rows(); ++i) {
            const Eigen::VectorXf x = w.data.row(i).transpose();
            const DcoResult a = dco_learned_proj(x, ctx, w.norms(i), tau, cascade);
            const DcoResult b = dco_bsa_res_incremental(x, ctx, w.norms(i), tau, m);
            CHECK(a.pruned == b.pruned);
            CHECK(a.distance == b.distance);
            CHECK(a.dims_scanned == b.dims_scanned);
        }
        Cascade wrong = cascade;
        wrong.stages.pop_back();
        CHECK_THROWS_AS(dco_learned_proj(w.data.row(0).transpose(), ctx, w.norms(0), tau, wrong), Error);
    }
}

TEST_CASE("dco_learned_quant") {
    const RowMatrixXf data = testing::gaussian(600, 8, 7);
    const Codebook cb = pq_train(data, 2, 4, 1);
    const PqCode code = {3, 9};
    const Eigen::VectorXf v = reconstruct(cb, code);
    const LookupTable lut = build_lut(cb, v);
    const LinearClassifier clf{1.0f, {1.0f}, 0.0f};

    const DcoResult r = dco_learned_quant(code.data(), lut, code_residual(cb, v, code), 0.0f, clf, v, v);
    CHECK(adc(lut, code) == 0.0f);
    CHECK_FALSE(r.pruned);
    CHECK(r.distance == 0.0f);
    CHECK(r.dims_scanned == 8);

    // far vector with a tight threshold is pruned by lookups alone
    const Eigen::VectorXf q = v + Eigen::VectorXf::Constant(8, 10.0f);
    const LookupTable lq = build_lut(cb, q);
    const DcoResult far = dco_learned_quant(code.data(), lq, 0.0f, 1.0f, clf, v, q);
    CHECK(far.pruned);
    CHECK(far.dims_scanned == 0);
    CHECK(far.lookups == 2);
    CHECK(far.distance == adc(lq, code));

    const LinearClassifier bad{1.0f, {}, 0.0f};
    CHECK_THROWS_AS(dco_learned_quant(code.data(), lut, 0.0f, 1.0f, bad, v, v), Error);
}

TEST_CASE("QueryDco dispatch matches the free operators") {
    const Workload w = make_workload(32, 300, 8);
    const QueryContext ctx = make_query_context(w.rotor, w.queries.row(0).transpose(), 8);
    const float tau = kth_distance(w, ctx, 5);
    DcoStrategy s;
    s.delta_d = 8;
    s.m = 3.0f;
    s.kind = DcoKind::bsa_res_inc;
    const QueryDco inc(s, ctx);
    s.kind = DcoKind::bsa_res;
    s.fixed_d = 16;
    const QueryDco single(s, ctx);
    s.kind = DcoKind::exact;
    const QueryDco ex(s, ctx);
    for (Eigen::Index i = 0; i < w.data.rows(); ++i) {
        const Eigen::VectorXf x = w.data.row(i).transpose();
        const DcoResult a = inc(x, w.norms(i), tau);
        const DcoResult b = dco_bsa_res_incremental(x, ctx, w.norms(i), tau, 3.0f);
        CHECK((a.pruned == b.pruned && a.distance == b.distance));
        const DcoResult c = single(x, w.norms(i), tau);
        const DcoResult d = dco_bsa_res(x, ctx, w.norms(i), tau, 3.0f, 16);
        CHECK((c.pruned == d.pruned && c.distance == d.distance));
        const DcoResult e = ex(x, w.norms(i), tau);
        CHECK(e.pruned == (e.distance > tau));
        CHECK(ex.exact(x) == doctest::Approx(e.distance).epsilon(1e-4));
    }
}
