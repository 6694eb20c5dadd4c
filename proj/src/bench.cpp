#include "fastdco/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <thread>
#include <unordered_set>

namespace fastdco {

double recall_at_k(std::span<const Neighbor> result, std::span<const VectorId> truth, int k) {
    require(k >= 1, "K must be positive");
    require(result.size() >= static_cast<std::size_t>(k) && truth.size() >= static_cast<std::size_t>(k),
            "result and truth rows need at least K entries");
    std::unordered_set<VectorId> want(truth.begin(), truth.begin() + k);
    int hit = 0;
    for (int i = 0; i < k; ++i) hit += want.count(result[static_cast<std::size_t>(i)].id) != 0 ? 1 : 0;
    return static_cast<double>(hit) / k;
}

SyntheticKind parse_synthetic_kind(std::string_view name) {
    if (name == "isotropic") return SyntheticKind::isotropic;
    if (name == "anisotropic") return SyntheticKind::anisotropic;
    if (name == "clustered") return SyntheticKind::clustered;
    throw Error(ErrorCode::invalid_argument, "unknown synthetic kind '" + std::string(name) + "'");
}

Dataset gen_synthetic(SyntheticKind kind, Eigen::Index n, int dim, std::uint64_t seed, const SyntheticParams& params) {
    require(n >= 1 && dim >= 1, "n and D must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> gauss(0.0f, 1.0f);
    Dataset out(n, dim);
    switch (kind) {
        case SyntheticKind::isotropic:
            for (Eigen::Index i = 0; i < n; ++i)
                for (int j = 0; j < dim; ++j) out(i, j) = gauss(rng);
            break;
        case SyntheticKind::anisotropic: {
            require(params.decay > 0.0, "decay must be positive");
            Eigen::VectorXf stddev(dim);
            for (int j = 0; j < dim; ++j) stddev(j) = static_cast<float>(std::pow(params.decay, j));
            for (Eigen::Index i = 0; i < n; ++i)
                for (int j = 0; j < dim; ++j) out(i, j) = gauss(rng) * stddev(j);
            if (params.rotate) {
                const RowMatrixXf basis = fit_random_rotor(dim, seed ^ 0x5bd1e995ULL).rotation;
                out = (out * basis).eval();
            }
            break;
        }
        case SyntheticKind::clustered: {
            require(params.clusters >= 1, "need at least one cluster");
            RowMatrixXf centers(params.clusters, dim);
            for (int c = 0; c < params.clusters; ++c)
                for (int j = 0; j < dim; ++j) centers(c, j) = gauss(rng);
            std::uniform_int_distribution<int> pick(0, params.clusters - 1);
            const auto spread = static_cast<float>(params.cluster_std);
            for (Eigen::Index i = 0; i < n; ++i) {
                const int c = pick(rng);
                for (int j = 0; j < dim; ++j) out(i, j) = centers(c, j) + spread * gauss(rng);
            }
            break;
        }
    }
    return out;
}

namespace {

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

void fnv(std::uint64_t& h, std::string_view s) {
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= kFnvPrime;
    }
    h ^= 0xff;
    h *= kFnvPrime;
}

std::string describe(const DcoStrategy& s) {
    std::ostringstream o;
    o << to_string(s.kind) << " m=" << s.m << " eps0=" << s.epsilon0 << " dd=" << s.delta_d << " d=" << s.fixed_d;
    if (s.cascade) {
        o << " r=" << s.cascade->target_recall;
        for (const auto& st : s.cascade->stages)
            o << " [" << st.checkpoint << ' ' << st.classifier.m1 << ' ' << st.classifier.beta << ']';
    }
    if (s.quant_classifier) {
        o << " q=" << s.quant_classifier->m1 << ' ' << s.quant_classifier->beta;
        for (const float w : s.quant_classifier->extra_weights) o << ' ' << w;
    }
    return o.str();
}

using SearchFn = std::function<SearchResult(const Eigen::VectorXf&, int, const DcoStrategy&)>;

BenchReport run(const SearchFn& search, int dim, const char* index, const char* param_name, const Dataset& queries,
                const GroundTruth& truth, const BenchConfig& config) {
    require(queries.rows() >= 1, "benchmark needs queries");
    require(truth.num_queries() == queries.rows(), "ground truth rows differ from query count",
            ErrorCode::dimension_mismatch);
    require(truth.ids.cols() >= config.k, "ground truth has fewer than K neighbours per query",
            ErrorCode::dimension_mismatch);
    require(config.threads >= 1, "threads must be positive");

    BenchReport report;
    report.dataset = config.dataset;
    report.index = index;
    report.param_name = param_name;
    report.seed = config.seed;
    report.config_hash = config_hash(config, index);

    const auto nq = static_cast<std::size_t>(queries.rows());
    std::vector<Eigen::VectorXf> qs(nq);
    for (std::size_t i = 0; i < nq; ++i) qs[i] = queries.row(static_cast<Eigen::Index>(i)).transpose();

    using Clock = std::chrono::steady_clock;
    for (const auto& bs : config.strategies) {
        for (const int param : config.grid) {
            std::vector<SearchResult> results(nq);
            const auto t0 = Clock::now();
            for (std::size_t i = 0; i < nq; ++i) results[i] = search(qs[i], param, bs.strategy);
            const double serial = std::chrono::duration<double>(Clock::now() - t0).count();

            double parallel = serial;
            if (config.threads > 1) {
                const auto t1 = Clock::now();
                std::vector<std::thread> workers;
                for (int w = 0; w < config.threads; ++w)
                    workers.emplace_back([&, w] {
                        for (std::size_t i = static_cast<std::size_t>(w); i < nq;
                             i += static_cast<std::size_t>(config.threads))
                            (void)search(qs[i], param, bs.strategy);
                    });
                for (auto& t : workers) t.join();
                parallel = std::chrono::duration<double>(Clock::now() - t1).count();
            }

            BenchPoint point;
            point.strategy = bs.name;
            point.param = param;
            SearchCounters total;
            double recall = 0.0;
            for (std::size_t i = 0; i < nq; ++i) {
                const auto row = truth.ids.row(static_cast<Eigen::Index>(i));
                recall += recall_at_k(results[i].neighbors, std::span<const VectorId>(row.data(), row.size()),
                                      config.k);
                total += results[i].counters;
            }
            point.recall = recall / static_cast<double>(nq);
            point.qps = static_cast<double>(nq) / std::max(serial, 1e-12);
            point.qps_parallel = static_cast<double>(nq) / std::max(parallel, 1e-12);
            point.dco_calls = static_cast<double>(total.dco_calls) / static_cast<double>(nq);
            if (total.dco_calls > 0)
                point.scan_rate = static_cast<double>(total.dims_scanned_total) /
                                  (static_cast<double>(total.dco_calls) * static_cast<double>(dim));
            const auto negatives = total.pruned_count + total.kept_above_tau;
            if (negatives > 0)
                point.pruned_rate = static_cast<double>(total.pruned_count) / static_cast<double>(negatives);
            report.points.push_back(point);
        }
    }
    return report;
}

/// Neighbour lists shorter than K (tiny indexes) are padded so recall stays defined.
SearchResult padded(SearchResult r, int k) {
    while (r.neighbors.size() < static_cast<std::size_t>(k)) r.neighbors.push_back({-1, 0.0f});
    return r;
}

}  // namespace

std::uint64_t config_hash(const BenchConfig& config, std::string_view index_kind) {
    std::uint64_t h = kFnvOffset;
    fnv(h, config.dataset);
    fnv(h, index_kind);
    for (const auto& s : config.strategies) {
        fnv(h, s.name);
        fnv(h, describe(s.strategy));
    }
    for (const int p : config.grid) fnv(h, std::to_string(p));
    fnv(h, std::to_string(config.k));
    fnv(h, std::to_string(config.seed));
    for (const auto& f : config.fingerprint) fnv(h, f);
    return h;
}

BenchReport run_bench(const IvfIndex& index, const Dataset& queries, const GroundTruth& truth,
                      const BenchConfig& config) {
    const int k = config.k;
    return run(
        [&](const Eigen::VectorXf& q, int nprobe, const DcoStrategy& s) {
            return padded(ivf_search(index, q, k, nprobe, s), k);
        },
        index.store.dim(), "ivf", "nprobe", queries, truth, config);
}

BenchReport run_bench(const HnswIndex& index, const Dataset& queries, const GroundTruth& truth,
                      const BenchConfig& config) {
    const int k = config.k;
    return run(
        [&](const Eigen::VectorXf& q, int ef, const DcoStrategy& s) {
            return padded(hnsw_search(index, q, k, std::max(ef, k), s), k);
        },
        index.store.dim(), "hnsw", "ef", queries, truth, config);
}

std::string BenchReport::table() const {
    std::ostringstream o;
    char line[256];
    o << "dataset " << dataset << "  index " << index << "  seed " << seed << "  config " << std::hex
      << config_hash << std::dec << '\n';
    std::snprintf(line, sizeof line, "%-14s %8s %8s %11s %11s %9s %9s %10s\n", "strategy", param_name.c_str(),
                  "recall", "qps", "qps_par", "scan", "pruned", "dco/query");
    o << line;
    for (const auto& p : points) {
        std::snprintf(line, sizeof line, "%-14s %8d %8.4f %11.1f %11.1f %9.4f %9.4f %10.1f\n", p.strategy.c_str(),
                      p.param, p.recall, p.qps, p.qps_parallel, p.scan_rate, p.pruned_rate, p.dco_calls);
        o << line;
    }
    return o.str();
}

std::string BenchReport::tsv() const {
    std::ostringstream o;
    o << "dataset\tindex\tstrategy\tparam_name\tparam\trecall\tqps\tqps_parallel\tscan_rate\tpruned_rate\tdco_calls"
         "\tseed\tconfig_hash\n";
    char hash[32];
    std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(config_hash));
    for (const auto& p : points) {
        char nums[160];
        std::snprintf(nums, sizeof nums, "%.6f\t%.3f\t%.3f\t%.6f\t%.6f\t%.3f", p.recall, p.qps, p.qps_parallel,
                      p.scan_rate, p.pruned_rate, p.dco_calls);
        o << dataset << '\t' << index << '\t' << p.strategy << '\t' << param_name << '\t' << p.param << '\t' << nums
          << '\t' << seed << '\t' << hash << '\n';
    }
    return o.str();
}

}  // namespace fastdco
