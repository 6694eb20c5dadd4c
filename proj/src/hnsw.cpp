#include "fastdco/index.hpp"
#include "store_io.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <queue>
#include <random>

namespace fastdco {

namespace {

struct Candidate {
    float distance;
    VectorId id;
};
struct Closer {
    bool operator()(const Candidate& a, const Candidate& b) const {
        return a.distance > b.distance || (a.distance == b.distance && a.id > b.id);
    }
};
struct Farther {
    bool operator()(const Candidate& a, const Candidate& b) const {
        return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    }
};
using MinQueue = std::priority_queue<Candidate, std::vector<Candidate>, Closer>;
using MaxQueue = std::priority_queue<Candidate, std::vector<Candidate>, Farther>;

bool by_distance(const Candidate& a, const Candidate& b) {
    return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
}

/// Epoch-tagged visited set.
class Visited {
public:
    explicit Visited(std::size_t n) : marks_(n, 0) {}
    void reset() {
        if (++epoch_ == 0) {
            std::fill(marks_.begin(), marks_.end(), 0);
            epoch_ = 1;
        }
    }
    bool insert(VectorId id) {
        auto& m = marks_[static_cast<std::size_t>(id)];
        if (m == epoch_) return false;
        m = epoch_;
        return true;
    }

private:
    std::vector<std::uint32_t> marks_;
    std::uint32_t epoch_ = 0;
};

class Builder {
public:
    Builder(HnswIndex& index, std::uint64_t seed) : index_(index), visited_(static_cast<std::size_t>(index.store.size())), rng_(seed) {}

    float dist(VectorId a, VectorId b) const {
        return (index_.store.data.row(a) - index_.store.data.row(b)).squaredNorm();
    }

    int random_level() {
        const double ml = 1.0 / std::log(static_cast<double>(std::max(index_.M, 2)));
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        const double u = std::max(unif(rng_), 1e-300);
        return static_cast<int>(-std::log(u) * ml);
    }

    VectorId greedy(VectorId node, VectorId ep, int level) const {
        float best = dist(node, ep);
        bool improved = true;
        while (improved) {
            improved = false;
            for (const VectorId nb : index_.links[static_cast<std::size_t>(ep)][static_cast<std::size_t>(level)]) {
                const float d = dist(node, nb);
                if (d < best) {
                    best = d;
                    ep = nb;
                    improved = true;
                }
            }
        }
        return ep;
    }

    std::vector<Candidate> search_layer(VectorId node, VectorId ep, int ef, int level) {
        visited_.reset();
        visited_.insert(ep);
        MinQueue frontier;
        MaxQueue best;
        const float d0 = dist(node, ep);
        frontier.push({d0, ep});
        best.push({d0, ep});
        while (!frontier.empty()) {
            const Candidate c = frontier.top();
            if (c.distance > best.top().distance && static_cast<int>(best.size()) >= ef) break;
            frontier.pop();
            for (const VectorId nb : index_.links[static_cast<std::size_t>(c.id)][static_cast<std::size_t>(level)]) {
                if (!visited_.insert(nb)) continue;
                const float d = dist(node, nb);
                if (static_cast<int>(best.size()) < ef || d < best.top().distance) {
                    frontier.push({d, nb});
                    best.push({d, nb});
                    if (static_cast<int>(best.size()) > ef) best.pop();
                }
            }
        }
        std::vector<Candidate> out;
        while (!best.empty()) {
            out.push_back(best.top());
            best.pop();
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

    /// Diversity heuristic over candidates sorted ascending by distance to the
    /// base: a candidate is kept unless some kept neighbour is closer to it than
    /// the base is. Discarded candidates are not used to fill up.
    std::vector<VectorId> select(const std::vector<Candidate>& sorted, std::size_t cap) const {
        std::vector<VectorId> kept;
        for (const Candidate& c : sorted) {
            if (kept.size() >= cap) break;
            bool diverse = true;
            for (const VectorId r : kept)
                if (dist(c.id, r) < c.distance) {
                    diverse = false;
                    break;
                }
            if (diverse) kept.push_back(c.id);
        }
        return kept;
    }

    void shrink(VectorId node, int level) {
        auto& adj = index_.links[static_cast<std::size_t>(node)][static_cast<std::size_t>(level)];
        const auto cap = static_cast<std::size_t>(index_.max_degree(level));
        if (adj.size() <= cap) return;
        std::vector<Candidate> scored;
        scored.reserve(adj.size());
        for (const VectorId nb : adj) scored.push_back({dist(node, nb), nb});
        std::sort(scored.begin(), scored.end(), by_distance);
        adj = select(scored, cap);
    }

    void insert(VectorId node) {
        const int level = random_level();
        index_.levels[static_cast<std::size_t>(node)] = level;
        index_.links[static_cast<std::size_t>(node)].assign(static_cast<std::size_t>(level) + 1, {});
        if (node == 0) {
            index_.entry = 0;
            index_.max_level = level;
            return;
        }

        VectorId ep = index_.entry;
        for (int l = index_.max_level; l > level; --l) ep = greedy(node, ep, l);

        for (int l = std::min(level, index_.max_level); l >= 0; --l) {
            const auto found = search_layer(node, ep, index_.ef_construction, l);
            auto& adj = index_.links[static_cast<std::size_t>(node)][static_cast<std::size_t>(l)];
            adj = select(found, static_cast<std::size_t>(index_.M));
            for (const VectorId nb : adj) {
                index_.links[static_cast<std::size_t>(nb)][static_cast<std::size_t>(l)].push_back(node);
                shrink(nb, l);
            }
            ep = found.front().id;
        }
        if (level > index_.max_level) {
            index_.max_level = level;
            index_.entry = node;
        }
    }

    /// Links every base-layer node the entry cannot reach from its nearest
    /// reachable node that still has spare degree. Outliers whose only link is
    /// later dropped by a neighbour's shrink would otherwise be lost.
    void repair() {
        const std::size_t n = index_.links.size();
        const auto cap = static_cast<std::size_t>(index_.max_degree(0));
        std::vector<char> seen(n, 0);
        auto mark_from = [&](VectorId start) {
            std::vector<VectorId> stack{start};
            seen[static_cast<std::size_t>(start)] = 1;
            while (!stack.empty()) {
                const VectorId v = stack.back();
                stack.pop_back();
                for (const VectorId nb : index_.links[static_cast<std::size_t>(v)][0])
                    if (!seen[static_cast<std::size_t>(nb)]) {
                        seen[static_cast<std::size_t>(nb)] = 1;
                        stack.push_back(nb);
                    }
            }
        };
        mark_from(index_.entry);
        for (std::size_t u = 0; u < n; ++u) {
            if (seen[u]) continue;
            const auto node = static_cast<VectorId>(u);
            VectorId host = -1;
            for (const Candidate& c : search_layer(node, index_.entry, index_.ef_construction, 0))
                if (seen[static_cast<std::size_t>(c.id)] && index_.links[static_cast<std::size_t>(c.id)][0].size() < cap) {
                    host = c.id;
                    break;
                }
            if (host < 0) {
                float best = 0.0f;
                for (std::size_t v = 0; v < n; ++v) {
                    if (!seen[v] || index_.links[v][0].size() >= cap) continue;
                    const float d = dist(node, static_cast<VectorId>(v));
                    if (host < 0 || d < best) {
                        best = d;
                        host = static_cast<VectorId>(v);
                    }
                }
            }
            if (host < 0) continue;  // every reachable list is full
            index_.links[static_cast<std::size_t>(host)][0].push_back(node);
            mark_from(node);
        }
    }

private:
    HnswIndex& index_;
    Visited visited_;
    std::mt19937_64 rng_;
};

}  // namespace

HnswIndex hnsw_build(const Dataset& data, const Rotor& rotor, const HnswBuildOptions& options, const Codebook* codebook) {
    require(data.rows() >= 1, "HNSW needs at least one vector");
    require(options.M >= 2, "M must be at least 2");
    require(options.ef_construction >= 1, "efConstruction must be positive");
    HnswIndex index;
    index.store = make_vector_store(data, rotor, codebook);
    index.M = options.M;
    index.ef_construction = options.ef_construction;
    const auto n = static_cast<std::size_t>(index.store.size());
    index.levels.assign(n, 0);
    index.links.resize(n);

    Builder builder(index, options.seed);
    for (std::size_t i = 0; i < n; ++i) builder.insert(static_cast<VectorId>(i));
    builder.repair();
    return index;
}

SearchResult hnsw_search(const HnswIndex& index, const Eigen::Ref<const Eigen::VectorXf>& q, int k, int ef,
                         const DcoStrategy& strategy) {
    require(k >= 1 && ef >= k, "need 1 <= K <= ef");
    const VectorStore& store = index.store;
    strategy.validate(store.dim(), store.rotor.kind, store.has_codes());

    QueryDco dco(strategy, make_query_context(store.rotor, q, strategy.delta_d),
                 store.has_codes() ? &*store.codebook : nullptr);
    auto exact = [&](VectorId id) { return dco.exact(store.data.row(id).transpose()); };

    VectorId ep = index.entry;
    float ep_dist = exact(ep);
    for (int l = index.max_level; l > 0; --l) {
        bool improved = true;
        while (improved) {
            improved = false;
            for (const VectorId nb : index.links[static_cast<std::size_t>(ep)][static_cast<std::size_t>(l)]) {
                const float d = exact(nb);
                if (d < ep_dist) {
                    ep_dist = d;
                    ep = nb;
                    improved = true;
                }
            }
        }
    }

    SearchResult result;
    Visited visited(static_cast<std::size_t>(store.size()));
    visited.reset();
    visited.insert(ep);
    MinQueue frontier;
    detail::ResultQueue queue(static_cast<std::size_t>(ef));
    frontier.push({ep_dist, ep});
    queue.offer({ep, ep_dist});

    PqCode scratch;
    while (!frontier.empty()) {
        const Candidate c = frontier.top();
        if (queue.full() && c.distance > queue.threshold()) break;
        frontier.pop();
        for (const VectorId nb : index.links[static_cast<std::size_t>(c.id)][0]) {
            if (!visited.insert(nb)) continue;
            const float tau = queue.threshold();
            const DcoResult r = dco(store.data.row(nb).transpose(), store.norms(nb), tau,
                                    detail::code_of(store, nb, scratch), detail::resid_of(store, nb));
            result.counters.record(r, tau);
            if (!r.pruned) {
                if (queue.offer({nb, r.distance})) frontier.push({r.distance, nb});
            } else if (!r.used_exact) {
                // pruned candidates still steer navigation by their estimate
                frontier.push({r.distance, nb});
            }
        }
    }
    result.neighbors = queue.sorted(static_cast<std::size_t>(k));
    return result;
}

void save_index(const HnswIndex& index, const std::string& path) {
    BinaryWriter out(path);
    detail::write_tag(out, "HNS1");
    const auto n = static_cast<std::int32_t>(index.levels.size());
    out.put<std::int32_t>(n);
    out.put<std::int32_t>(index.M);
    out.put<std::int32_t>(index.ef_construction);
    out.put<std::int32_t>(index.entry);
    out.put<std::int32_t>(index.max_level);
    out.put_array(std::span<const int>(index.levels));
    for (const auto& node : index.links)
        for (const auto& adj : node) {
            out.put<std::int32_t>(static_cast<std::int32_t>(adj.size()));
            out.put_array(std::span<const VectorId>(adj));
        }
    detail::write_store(out, index.store);
    out.close();
}

HnswIndex load_hnsw(const std::string& path) {
    BinaryReader in(path);
    detail::expect_tag(in, "HNS1", path);
    HnswIndex index;
    const auto n = in.get_count();
    index.M = in.get_count();
    index.ef_construction = in.get_count();
    index.entry = in.get_count();
    index.max_level = in.get_count(64);
    index.levels.resize(static_cast<std::size_t>(n));
    in.get_array(std::span<int>(index.levels));
    index.links.resize(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < index.links.size(); ++i) {
        const int level = index.levels[i];
        require(level >= 0 && level <= index.max_level, "corrupt level table", ErrorCode::format_error);
        index.links[i].resize(static_cast<std::size_t>(level) + 1);
        for (auto& adj : index.links[i]) {
            adj.resize(static_cast<std::size_t>(in.get_count(1 << 16)));
            in.get_array(std::span<VectorId>(adj));
        }
    }
    index.store = detail::read_store(in);
    require(index.store.size() == n, "stored vectors disagree with the graph", ErrorCode::format_error);
    return index;
}

}  // namespace fastdco
