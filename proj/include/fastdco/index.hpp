#pragma once

#include "fastdco/common.hpp"
#include "fastdco/dco.hpp"
#include "fastdco/quant.hpp"
#include "fastdco/transform.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fastdco {

struct Neighbor {
    VectorId id = 0;
    float distance = 0.0f;

    friend bool operator<(const Neighbor& a, const Neighbor& b) {
        return a.distance < b.distance || (a.distance == b.distance && a.id < b.id);
    }
};

struct SearchCounters {
    std::uint64_t dco_calls = 0;
    std::uint64_t dims_scanned_total = 0;
    std::uint64_t pruned_count = 0;    // excluded before an exact distance was formed
    std::uint64_t exact_count = 0;     // exact distance formed
    std::uint64_t kept_above_tau = 0;  // exact distance formed and found above tau
    std::uint64_t lookups_total = 0;

    void record(const DcoResult& r, float tau);
    SearchCounters& operator+=(const SearchCounters& o);
};

struct SearchResult {
    std::vector<Neighbor> neighbors;  // ascending
    SearchCounters counters;
};

/// Vector storage shared by both index types: rotated vectors, their squared
/// norms, and optional PQ codes with per-vector code residuals.
struct VectorStore {
    Rotor rotor;
    RowMatrixXf data;
    Eigen::VectorXf norms;
    std::optional<Codebook> codebook;
    PackedCodes codes;
    Eigen::VectorXf code_resid;

    int dim() const { return static_cast<int>(data.cols()); }
    Eigen::Index size() const { return data.rows(); }
    bool has_codes() const { return codebook.has_value(); }
};

/// Rotates `data` with `rotor` and, when a codebook is given (trained in the
/// rotated space), encodes every vector.
VectorStore make_vector_store(const Dataset& data, const Rotor& rotor, const Codebook* codebook = nullptr);

struct IvfIndex {
    VectorStore store;
    RowMatrixXf centroids;  // nlist x D, rotated space
    std::vector<std::vector<VectorId>> buckets;

    int nlist() const { return static_cast<int>(centroids.rows()); }
};

struct IvfBuildOptions {
    int nlist = 256;
    std::uint64_t seed = 0;
    int kmeans_iters = 25;
    Eigen::Index train_sample = 0;  // 0: min(n, 64 * nlist)
};

IvfIndex ivf_build(const Dataset& data, const Rotor& rotor, const IvfBuildOptions& options,
                   const Codebook* codebook = nullptr);

/// Scans the nprobe nearest buckets through the strategy's DCO.
SearchResult ivf_search(const IvfIndex& index, const Eigen::Ref<const Eigen::VectorXf>& q, int k, int nprobe,
                        const DcoStrategy& strategy);

/// Ids of the nprobe nearest buckets for a rotated query, nearest first.
std::vector<int> ivf_probe_order(const IvfIndex& index, const Eigen::Ref<const Eigen::VectorXf>& q_rot, int nprobe);

struct HnswIndex {
    VectorStore store;
    int M = 16;
    int ef_construction = 200;
    VectorId entry = 0;
    int max_level = 0;
    std::vector<int> levels;
    std::vector<std::vector<std::vector<VectorId>>> links;  // links[node][level]

    int max_degree(int level) const { return level == 0 ? 2 * M : M; }
};

struct HnswBuildOptions {
    int M = 16;
    int ef_construction = 200;
    std::uint64_t seed = 0;
};

HnswIndex hnsw_build(const Dataset& data, const Rotor& rotor, const HnswBuildOptions& options,
                     const Codebook* codebook = nullptr);

/// Greedy descent on upper layers, then an ef-wide beam search on the base
/// layer where result-queue admission goes through the strategy's DCO.
SearchResult hnsw_search(const HnswIndex& index, const Eigen::Ref<const Eigen::VectorXf>& q, int k, int ef,
                         const DcoStrategy& strategy);

// Index files start with a 4-byte tag ("IVF1" or "HNS1") followed by the rotor
// record, the index body, and the vector store; see README for the layout.
void save_index(const IvfIndex& index, const std::string& path);
void save_index(const HnswIndex& index, const std::string& path);
IvfIndex load_ivf(const std::string& path);
HnswIndex load_hnsw(const std::string& path);
/// "ivf", "hnsw", or throws.
std::string index_kind(const std::string& path);

}  // namespace fastdco
