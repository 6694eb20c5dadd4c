#include "fastdco/dco.hpp"

#include <algorithm>
#include <cmath>

namespace fastdco {

DcoKind parse_dco_kind(std::string_view name) {
    if (name == "exact") return DcoKind::exact;
    if (name == "ads") return DcoKind::ads;
    if (name == "bsa") return DcoKind::bsa_res;
    if (name == "bsa-inc") return DcoKind::bsa_res_inc;
    if (name == "learned-pca") return DcoKind::learned_proj;
    if (name == "learned-opq") return DcoKind::learned_quant;
    throw Error(ErrorCode::invalid_argument, "unknown DCO '" + std::string(name) + "'");
}

const char* to_string(DcoKind kind) {
    switch (kind) {
        case DcoKind::exact: return "exact";
        case DcoKind::ads: return "ads";
        case DcoKind::bsa_res: return "bsa";
        case DcoKind::bsa_res_inc: return "bsa-inc";
        case DcoKind::learned_proj: return "learned-pca";
        case DcoKind::learned_quant: return "learned-opq";
    }
    return "unknown";
}

void DcoStrategy::validate(int dim, RotorKind rotor_kind, bool has_codes) const {
    switch (kind) {
        case DcoKind::exact: break;
        case DcoKind::ads:
            require(epsilon0 > 0.0f, "epsilon0 must be positive");
            require(delta_d >= 1 && delta_d <= dim, "delta_d must be in [1, D]");
            require(rotor_kind == RotorKind::random, "ADSampling requires a random rotor");
            break;
        case DcoKind::bsa_res:
        case DcoKind::bsa_res_inc:
            require(m > 0.0f, "multiplier m must be positive");
            require(delta_d >= 1 && delta_d <= dim, "delta_d must be in [1, D]");
            require(fixed_d >= 0 && fixed_d <= dim, "projected dimension must be in [0, D]");
            break;
        case DcoKind::learned_proj:
            require(cascade != nullptr, "learned-pca needs a classifier cascade");
            require(cascade->dim == dim && cascade->delta_d == delta_d,
                    "cascade checkpoints do not match the query checkpoints", ErrorCode::dimension_mismatch);
            require(cascade->stages.size() + 1 == make_checkpoints(dim, delta_d).size(),
                    "cascade needs one stage per checkpoint below D", ErrorCode::dimension_mismatch);
            break;
        case DcoKind::learned_quant:
            require(quant_classifier != nullptr, "learned-opq needs a classifier");
            require(quant_classifier->num_extras() == 1, "learned-opq classifier must take 3 features",
                    ErrorCode::dimension_mismatch);
            require(has_codes, "learned-opq needs an index built with PQ codes");
            break;
    }
}

namespace {

inline float block_dot(const Eigen::Ref<const Eigen::VectorXf>& x, const Eigen::VectorXf& q, int begin, int end) {
    return x.segment(begin, end - begin).dot(q.segment(begin, end - begin));
}

inline float block_l2(const Eigen::Ref<const Eigen::VectorXf>& x, const Eigen::VectorXf& q, int begin, int end) {
    return (x.segment(begin, end - begin) - q.segment(begin, end - begin)).squaredNorm();
}

inline float decomposed(float c1, float dot_acc) { return std::max(0.0f, c1 - 2.0f * dot_acc); }

void check_dims(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx) {
    require(x_rot.size() == ctx.q_rot.size(), "candidate length differs from query length",
            ErrorCode::dimension_mismatch);
}

}  // namespace

DcoResult dco_exact(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx, float x_norm2) {
    check_dims(x_rot, ctx);
    const float c1 = x_norm2 + ctx.q_norm2;
    float acc = 0.0f;
    int begin = 0;
    for (const int end : ctx.checkpoints) {
        acc += block_dot(x_rot, ctx.q_rot, begin, end);
        begin = end;
    }
    return {false, decomposed(c1, acc), ctx.dim(), true, 0};
}

DcoResult dco_bsa_res(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx, float x_norm2,
                      float tau, float m, int d) {
    check_dims(x_rot, ctx);
    const int at = ctx.checkpoint_index(d);
    require(at >= 0, "projected dimension is not a checkpoint of the query context");
    const int dim = ctx.dim();
    const float c1 = x_norm2 + ctx.q_norm2;

    float acc = 0.0f;
    int begin = 0;
    for (int c = 0; c <= at; ++c) {
        const int end = ctx.checkpoints[static_cast<std::size_t>(c)];
        acc += block_dot(x_rot, ctx.q_rot, begin, end);
        begin = end;
    }
    const float approx = decomposed(c1, acc);
    const float bound = m * ctx.sigma[static_cast<std::size_t>(at)];
    if (tau >= 0.0f && approx - bound > tau) return {true, approx, d, d == dim, 0};

    for (std::size_t c = static_cast<std::size_t>(at) + 1; c < ctx.checkpoints.size(); ++c) {
        const int end = ctx.checkpoints[c];
        acc += block_dot(x_rot, ctx.q_rot, begin, end);
        begin = end;
    }
    return {false, decomposed(c1, acc), dim, true, 0};
}

DcoResult dco_bsa_res_incremental(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx,
                                  float x_norm2, float tau, float m) {
    check_dims(x_rot, ctx);
    const float c1 = x_norm2 + ctx.q_norm2;
    const std::size_t last = ctx.checkpoints.size() - 1;
    float acc = 0.0f;
    int begin = 0;
    for (std::size_t c = 0; c < last; ++c) {
        const int end = ctx.checkpoints[c];
        acc += block_dot(x_rot, ctx.q_rot, begin, end);
        begin = end;
        const float approx = decomposed(c1, acc);
        if (tau >= 0.0f && approx - m * ctx.sigma[c] > tau) return {true, approx, end, false, 0};
    }
    acc += block_dot(x_rot, ctx.q_rot, begin, ctx.dim());
    const float dis = decomposed(c1, acc);
    return {tau >= 0.0f && dis > tau, dis, ctx.dim(), true, 0};
}

DcoResult dco_ads(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx, float tau, float epsilon0) {
    check_dims(x_rot, ctx);
    const int dim = ctx.dim();
    const std::size_t last = ctx.checkpoints.size() - 1;
    float partial = 0.0f;
    int begin = 0;
    for (std::size_t c = 0; c < last; ++c) {
        const int end = ctx.checkpoints[c];
        partial += block_l2(x_rot, ctx.q_rot, begin, end);
        begin = end;
        if (tau >= 0.0f) {
            const float slack = 1.0f + epsilon0 / std::sqrt(static_cast<float>(end));
            const float estimate = partial * static_cast<float>(dim) / static_cast<float>(end);
            if (estimate > slack * slack * tau) return {true, estimate, end, false, 0};
        }
    }
    partial += block_l2(x_rot, ctx.q_rot, begin, dim);
    return {tau >= 0.0f && partial > tau, partial, dim, true, 0};
}

DcoResult dco_learned_proj(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx, float x_norm2,
                           float tau, const Cascade& cascade) {
    check_dims(x_rot, ctx);
    const std::size_t last = ctx.checkpoints.size() - 1;
    require(cascade.stages.size() == last, "cascade needs one stage per checkpoint below D",
            ErrorCode::dimension_mismatch);
    const float c1 = x_norm2 + ctx.q_norm2;
    float acc = 0.0f;
    int begin = 0;
    for (std::size_t c = 0; c < last; ++c) {
        const int end = ctx.checkpoints[c];
        acc += block_dot(x_rot, ctx.q_rot, begin, end);
        begin = end;
        const float approx = decomposed(c1, acc);
        if (tau >= 0.0f && cascade.stages[c].classifier.predict(approx, tau)) return {true, approx, end, false, 0};
    }
    acc += block_dot(x_rot, ctx.q_rot, begin, ctx.dim());
    const float dis = decomposed(c1, acc);
    return {tau >= 0.0f && dis > tau, dis, ctx.dim(), true, 0};
}

DcoResult dco_learned_quant(const std::uint8_t* code, const LookupTable& lut, float resid_feat, float tau,
                            const LinearClassifier& clf, const Eigen::Ref<const Eigen::VectorXf>& x_raw,
                            const Eigen::Ref<const Eigen::VectorXf>& q_raw) {
    require(clf.num_extras() == 1, "quantization classifier must take (adc, tau, residual)",
            ErrorCode::dimension_mismatch);
    const int lookups = static_cast<int>(lut.rows());
    if (tau >= 0.0f) {
        const float approx = adc(lut, code);
        const float extras[1] = {resid_feat};
        if (clf.predict(approx, tau, extras)) return {true, approx, 0, false, lookups};
    }
    const float dis = (x_raw - q_raw).squaredNorm();
    return {false, dis, static_cast<int>(x_raw.size()), true, tau >= 0.0f ? lookups : 0};
}

QueryDco::QueryDco(const DcoStrategy& strategy, QueryContext ctx, const Codebook* codebook)
    : strategy_(strategy), ctx_(std::move(ctx)) {
    if (strategy_.kind == DcoKind::learned_quant) {
        require(codebook != nullptr, "learned-opq needs a codebook");
        lut_ = build_lut(*codebook, ctx_.q_rot);
    }
    fixed_d_ = strategy_.fixed_d > 0 ? strategy_.fixed_d : ctx_.checkpoints.front();
}

DcoResult QueryDco::operator()(const Eigen::Ref<const Eigen::VectorXf>& x_rot, float x_norm2, float tau,
                               const std::uint8_t* code, float resid) const {
    switch (strategy_.kind) {
        case DcoKind::exact: {
            DcoResult r = dco_exact(x_rot, ctx_, x_norm2);
            r.pruned = tau >= 0.0f && r.distance > tau;
            return r;
        }
        case DcoKind::ads: return dco_ads(x_rot, ctx_, tau, strategy_.epsilon0);
        case DcoKind::bsa_res: return dco_bsa_res(x_rot, ctx_, x_norm2, tau, strategy_.m, fixed_d_);
        case DcoKind::bsa_res_inc: return dco_bsa_res_incremental(x_rot, ctx_, x_norm2, tau, strategy_.m);
        case DcoKind::learned_proj: return dco_learned_proj(x_rot, ctx_, x_norm2, tau, *strategy_.cascade);
        case DcoKind::learned_quant:
            return dco_learned_quant(code, lut_, resid, tau, *strategy_.quant_classifier, x_rot, ctx_.q_rot);
    }
    return {};
}

float QueryDco::exact(const Eigen::Ref<const Eigen::VectorXf>& x_rot) const {
    return (x_rot - ctx_.q_rot).squaredNorm();
}

}  // namespace fastdco
