#pragma once

#include "fastdco/common.hpp"
#include "fastdco/learn.hpp"
#include "fastdco/quant.hpp"
#include "fastdco/transform.hpp"

#include <memory>
#include <string>
#include <string_view>

namespace fastdco {

/// Any tau below zero means the result queue is not yet full: never prune.
inline constexpr float kQueueNotFull = -1.0f;

/// Outcome of one distance comparison against threshold tau.
///
/// When `pruned` is set and `used_exact` is not, `distance` is the operator's
/// approximate distance; otherwise it is the exact squared distance.
struct DcoResult {
    bool pruned = false;
    float distance = 0.0f;
    int dims_scanned = 0;
    bool used_exact = false;
    int lookups = 0;
};

enum class DcoKind { exact, ads, bsa_res, bsa_res_inc, learned_proj, learned_quant };

/// CLI spellings: exact, ads, bsa, bsa-inc, learned-pca, learned-opq.
DcoKind parse_dco_kind(std::string_view name);
const char* to_string(DcoKind kind);

struct DcoStrategy {
    DcoKind kind = DcoKind::exact;
    float m = 8.0f;
    float epsilon0 = 2.1f;
    int delta_d = 32;
    int fixed_d = 0;  // bsa_res projected dimension; 0 means the first checkpoint
    std::shared_ptr<const Cascade> cascade;
    std::shared_ptr<const LinearClassifier> quant_classifier;

    /// Throws unless the parameters present match the kind and `dim`.
    void validate(int dim, RotorKind rotor_kind, bool has_codes) const;
};

DcoResult dco_exact(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx, float x_norm2);

/// Single-shot residual-corrected test at projected dimension `d` (a checkpoint of ctx).
DcoResult dco_bsa_res(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx, float x_norm2,
                      float tau, float m, int d);

/// Incremental residual-corrected test over every checkpoint of ctx.
DcoResult dco_bsa_res_incremental(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx,
                                  float x_norm2, float tau, float m);

/// Random-projection hypothesis test: prune when (D/d) * partial > (1 + eps0/sqrt(d))^2 * tau.
DcoResult dco_ads(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx, float tau, float epsilon0);

/// Learned test on the uncorrected projection distance, one classifier per checkpoint below D.
DcoResult dco_learned_proj(const Eigen::Ref<const Eigen::VectorXf>& x_rot, const QueryContext& ctx, float x_norm2,
                           float tau, const Cascade& cascade);

/// Learned test on the asymmetric PQ distance plus the vector's code residual.
DcoResult dco_learned_quant(const std::uint8_t* code, const LookupTable& lut, float resid_feat, float tau,
                            const LinearClassifier& clf, const Eigen::Ref<const Eigen::VectorXf>& x_raw,
                            const Eigen::Ref<const Eigen::VectorXf>& q_raw);

/// Binds a strategy to one query; the per-candidate entry point used by the indexes.
class QueryDco {
public:
    QueryDco(const DcoStrategy& strategy, QueryContext ctx, const Codebook* codebook = nullptr);

    DcoResult operator()(const Eigen::Ref<const Eigen::VectorXf>& x_rot, float x_norm2, float tau,
                         const std::uint8_t* code = nullptr, float resid = 0.0f) const;

    /// Exact squared distance without any pruning test.
    float exact(const Eigen::Ref<const Eigen::VectorXf>& x_rot) const;

    const QueryContext& context() const { return ctx_; }

private:
    DcoStrategy strategy_;
    QueryContext ctx_;
    LookupTable lut_;
    int fixed_d_ = 0;
};

}  // namespace fastdco
