#include "fastdco/training.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <unordered_set>

namespace fastdco {

namespace {

/// dis' at every checkpoint plus the exact value, with the same block
/// accumulation the operators use.
void projected_distances(const Eigen::Ref<const Eigen::VectorXf>& x_rot, float x_norm2, const QueryContext& ctx,
                         std::vector<float>& out) {
    out.clear();
    const float c1 = x_norm2 + ctx.q_norm2;
    float acc = 0.0f;
    int begin = 0;
    for (const int end : ctx.checkpoints) {
        acc += x_rot.segment(begin, end - begin).dot(ctx.q_rot.segment(begin, end - begin));
        begin = end;
        out.push_back(std::max(0.0f, c1 - 2.0f * acc));
    }
}

}  // namespace

TrainingSet collect_training(const IvfIndex& index, const Dataset& queries, const CollectOptions& options) {
    const VectorStore& store = index.store;
    require(options.k >= 1 && options.k <= store.size(), "fewer than K points in the index");
    require(queries.cols() == store.dim(), "query dimension differs from index dimension",
            ErrorCode::dimension_mismatch);
    require(options.per_query_visits >= 0, "per-query sample count must be non-negative");
    const int nprobe = options.nprobe > 0 ? std::min(options.nprobe, index.nlist()) : std::max(1, index.nlist() / 16);

    TrainingSet set;
    set.dim = store.dim();
    set.delta_d = options.delta_d;
    set.checkpoints = make_checkpoints(set.dim, options.delta_d);
    const std::size_t stages = set.checkpoints.size() - 1;
    set.checkpoints.pop_back();
    set.per_checkpoint.assign(stages, {});

    std::mt19937_64 rng(options.seed);
    std::vector<float> proj;
    std::vector<VectorId> order(static_cast<std::size_t>(store.size()));
    const auto k = static_cast<std::size_t>(options.k);

    for (Eigen::Index qi = 0; qi < queries.rows(); ++qi) {
        const QueryContext ctx = make_query_context(store.rotor, queries.row(qi).transpose(), options.delta_d);
        std::optional<LookupTable> lut;
        if (store.has_codes()) lut = build_lut(*store.codebook, ctx.q_rot);

        // rank everything, then settle tau with the operators' own arithmetic
        const Eigen::VectorXf dist =
            (store.norms.array() + ctx.q_norm2 - 2.0f * (store.data * ctx.q_rot).array()).matrix();
        std::iota(order.begin(), order.end(), VectorId{0});
        std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                          [&](VectorId a, VectorId b) { return dist(a) < dist(b) || (dist(a) == dist(b) && a < b); });

        struct Pending {
            VectorId id;
            float exact;
            std::vector<float> proj;
        };
        std::vector<Pending> picked;
        float tau = 0.0f;
        std::unordered_set<VectorId> nn;
        for (std::size_t i = 0; i < k; ++i) {
            const VectorId id = order[i];
            projected_distances(store.data.row(id).transpose(), store.norms(id), ctx, proj);
            picked.push_back({id, proj.back(), proj});
            tau = std::max(tau, proj.back());
            nn.insert(id);
        }

        std::vector<Pending> negatives;
        for (const int bucket : ivf_probe_order(index, ctx.q_rot, nprobe))
            for (const VectorId id : index.buckets[static_cast<std::size_t>(bucket)]) {
                if (nn.count(id) != 0) continue;
                projected_distances(store.data.row(id).transpose(), store.norms(id), ctx, proj);
                if (proj.back() > tau) negatives.push_back({id, proj.back(), proj});
            }
        std::shuffle(negatives.begin(), negatives.end(), rng);
        if (negatives.size() > static_cast<std::size_t>(options.per_query_visits))
            negatives.resize(static_cast<std::size_t>(options.per_query_visits));
        for (auto& n : negatives) picked.push_back(std::move(n));

        PqCode scratch;
        for (const Pending& p : picked) {
            const int label = label_for(p.exact, tau);
            for (std::size_t s = 0; s < stages; ++s) {
                LabeledSample sample;
                sample.approx = p.proj[s];
                sample.tau = tau;
                sample.label = label;
                sample.exact_dis = p.exact;
                sample.query = static_cast<std::int32_t>(qi);
                set.per_checkpoint[s].push_back(std::move(sample));
            }
            if (lut) {
                scratch = store.codes.get(p.id);
                LabeledSample sample;
                sample.approx = adc(*lut, scratch);
                sample.tau = tau;
                sample.extras = {store.code_resid(p.id)};
                sample.label = label;
                sample.exact_dis = p.exact;
                sample.query = static_cast<std::int32_t>(qi);
                set.quant.push_back(std::move(sample));
            }
        }
    }
    return set;
}

}  // namespace fastdco
