#pragma once

#include "fastdco/index.hpp"
#include "fastdco/vecio.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace fastdco {

/// |result ∩ truth| / K over the first K entries of each; throws on short rows.
double recall_at_k(std::span<const Neighbor> result, std::span<const VectorId> truth, int k);

enum class SyntheticKind { isotropic, anisotropic, clustered };

/// "isotropic", "anisotropic", "clustered".
SyntheticKind parse_synthetic_kind(std::string_view name);

struct SyntheticParams {
    double decay = 0.9;         // anisotropic: std of dimension i is decay^i before rotation
    bool rotate = true;         // anisotropic: hide the spectrum behind a random rotation
    int clusters = 16;          // clustered: number of centers
    double cluster_std = 0.25;  // clustered: within-cluster std, centers ~ N(0, I)
};

Dataset gen_synthetic(SyntheticKind kind, Eigen::Index n, int dim, std::uint64_t seed,
                      const SyntheticParams& params = {});

/// One strategy evaluated over a grid of nprobe (IVF) or ef (HNSW) values.
struct BenchStrategy {
    std::string name;  // label in the report
    DcoStrategy strategy;
};

struct BenchConfig {
    std::string dataset;
    std::vector<BenchStrategy> strategies;
    std::vector<int> grid;
    int k = 10;
    int threads = 1;
    std::uint64_t seed = 0;
    /// Extra result-affecting settings (index parameters, artifact names) folded into the hash.
    std::vector<std::string> fingerprint;
};

struct BenchPoint {
    std::string strategy;
    int param = 0;
    double recall = 0.0;
    double qps = 0.0;           // one worker
    double qps_parallel = 0.0;  // `threads` workers
    double scan_rate = 0.0;     // dims scanned / (dco calls * D)
    double pruned_rate = 0.0;   // pruned / (pruned + exact-and-above-tau)
    double dco_calls = 0.0;     // per query
};

struct BenchReport {
    std::string dataset;
    std::string index;  // "ivf" or "hnsw"
    std::string param_name;
    std::uint64_t seed = 0;
    std::uint64_t config_hash = 0;
    std::vector<BenchPoint> points;

    std::string table() const;
    /// Header line then one tab-separated line per point, stable column order.
    std::string tsv() const;
};

std::uint64_t config_hash(const BenchConfig& config, std::string_view index_kind);

BenchReport run_bench(const IvfIndex& index, const Dataset& queries, const GroundTruth& truth,
                      const BenchConfig& config);
BenchReport run_bench(const HnswIndex& index, const Dataset& queries, const GroundTruth& truth,
                      const BenchConfig& config);

}  // namespace fastdco
