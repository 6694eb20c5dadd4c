#include "fastdco/index.hpp"
#include "store_io.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <random>

namespace fastdco {

void SearchCounters::record(const DcoResult& r, float tau) {
    ++dco_calls;
    dims_scanned_total += static_cast<std::uint64_t>(r.dims_scanned);
    lookups_total += static_cast<std::uint64_t>(r.lookups);
    if (r.used_exact) {
        ++exact_count;
        if (tau >= 0.0f && r.distance > tau) ++kept_above_tau;
    } else {
        ++pruned_count;
    }
}

SearchCounters& SearchCounters::operator+=(const SearchCounters& o) {
    dco_calls += o.dco_calls;
    dims_scanned_total += o.dims_scanned_total;
    pruned_count += o.pruned_count;
    exact_count += o.exact_count;
    kept_above_tau += o.kept_above_tau;
    lookups_total += o.lookups_total;
    return *this;
}

VectorStore make_vector_store(const Dataset& data, const Rotor& rotor, const Codebook* codebook) {
    VectorStore store;
    store.rotor = rotor;
    store.data = apply_rows(rotor, data);
    store.norms = store.data.rowwise().squaredNorm();
    if (codebook != nullptr) {
        require(codebook->dim == store.dim(), "codebook dimension differs from data dimension",
                ErrorCode::dimension_mismatch);
        store.codebook = *codebook;
        store.codes = PackedCodes(store.size(), codebook->num_subspaces, codebook->nbits);
        store.code_resid.resize(store.size());
        for (Eigen::Index i = 0; i < store.size(); ++i) {
            const auto row = store.data.row(i).transpose();
            const PqCode code = pq_encode(*codebook, row);
            store.codes.set(i, code);
            store.code_resid(i) = code_residual(*codebook, row, code);
        }
    }
    return store;
}

IvfIndex ivf_build(const Dataset& data, const Rotor& rotor, const IvfBuildOptions& options, const Codebook* codebook) {
    require(options.nlist >= 1 && options.nlist <= data.rows(), "nlist must be in [1, n]");
    IvfIndex index;
    index.store = make_vector_store(data, rotor, codebook);
    const RowMatrixXf& rotated = index.store.data;

    Eigen::Index sample = options.train_sample > 0 ? options.train_sample : 64 * static_cast<Eigen::Index>(options.nlist);
    sample = std::clamp<Eigen::Index>(sample, options.nlist, rotated.rows());
    RowMatrixXf train;
    if (sample < rotated.rows()) {
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(rotated.rows()));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
        std::shuffle(rows.begin(), rows.end(), rng);
        rows.resize(static_cast<std::size_t>(sample));
        std::sort(rows.begin(), rows.end());
        train.resize(sample, rotated.cols());
        for (Eigen::Index i = 0; i < sample; ++i) train.row(i) = rotated.row(rows[static_cast<std::size_t>(i)]);
    } else {
        train = rotated;
    }

    KMeansOptions km;
    km.max_iters = options.kmeans_iters;
    km.seed = options.seed;
    index.centroids = kmeans(train, options.nlist, km).centroids;

    index.buckets.assign(static_cast<std::size_t>(options.nlist), {});
    for (Eigen::Index i = 0; i < rotated.rows(); ++i) {
        const auto [c, d] = nearest_centroid(index.centroids, rotated.row(i));
        (void)d;
        index.buckets[static_cast<std::size_t>(c)].push_back(static_cast<VectorId>(i));
    }
    return index;
}

std::vector<int> ivf_probe_order(const IvfIndex& index, const Eigen::Ref<const Eigen::VectorXf>& q_rot, int nprobe) {
    require(nprobe >= 1 && nprobe <= index.nlist(), "nprobe must be in [1, nlist]");
    std::vector<std::pair<float, int>> scored(static_cast<std::size_t>(index.nlist()));
    for (int c = 0; c < index.nlist(); ++c)
        scored[static_cast<std::size_t>(c)] = {(index.centroids.row(c) - q_rot.transpose()).squaredNorm(), c};
    std::partial_sort(scored.begin(), scored.begin() + nprobe, scored.end());
    std::vector<int> order(static_cast<std::size_t>(nprobe));
    for (int i = 0; i < nprobe; ++i) order[static_cast<std::size_t>(i)] = scored[static_cast<std::size_t>(i)].second;
    return order;
}

SearchResult ivf_search(const IvfIndex& index, const Eigen::Ref<const Eigen::VectorXf>& q, int k, int nprobe,
                        const DcoStrategy& strategy) {
    require(k >= 1, "K must be positive");
    const VectorStore& store = index.store;
    strategy.validate(store.dim(), store.rotor.kind, store.has_codes());

    QueryDco dco(strategy, make_query_context(store.rotor, q, strategy.delta_d),
                 store.has_codes() ? &*store.codebook : nullptr);
    const auto probes = ivf_probe_order(index, dco.context().q_rot, nprobe);

    SearchResult result;
    detail::ResultQueue queue(static_cast<std::size_t>(k));
    PqCode scratch;
    for (const int bucket : probes) {
        for (const VectorId id : index.buckets[static_cast<std::size_t>(bucket)]) {
            const float tau = queue.threshold();
            const DcoResult r = dco(store.data.row(id).transpose(), store.norms(id), tau,
                                    detail::code_of(store, id, scratch), detail::resid_of(store, id));
            result.counters.record(r, tau);
            if (!r.pruned) queue.offer({id, r.distance});
        }
    }
    result.neighbors = queue.sorted(static_cast<std::size_t>(k));
    return result;
}

namespace detail {

void write_tag(BinaryWriter& out, const char (&tag)[5]) { out.put_array(std::span<const char>(tag, 4)); }

void expect_tag(BinaryReader& in, const char (&tag)[5], const std::string& path) {
    char got[4];
    in.get_array(std::span<char>(got, 4));
    if (std::memcmp(got, tag, 4) != 0) throw Error(ErrorCode::format_error, "unexpected index type in " + path);
}

void write_store(BinaryWriter& out, const VectorStore& store) {
    write_rotor(out, store.rotor);
    out.put<std::int32_t>(static_cast<std::int32_t>(store.size()));
    out.put<std::int32_t>(store.dim());
    out.put_matrix(store.norms);
    out.put_matrix(store.data);
    out.put<std::int32_t>(store.has_codes() ? 1 : 0);
    if (store.has_codes()) {
        write_codebook(out, *store.codebook);
        out.put_array(std::span<const std::uint8_t>(store.codes.bytes()));
        out.put_matrix(store.code_resid);
    }
}

VectorStore read_store(BinaryReader& in) {
    VectorStore store;
    store.rotor = read_rotor(in);
    const auto n = in.get_count();
    const auto dim = in.get_count(1 << 16);
    require(dim == store.rotor.dim(), "stored vectors disagree with the rotor", ErrorCode::format_error);
    store.norms = in.get_vector<float>(n);
    store.data = in.get_matrix<float>(n, dim);
    if (in.get<std::int32_t>() != 0) {
        store.codebook = read_codebook(in);
        store.codes = PackedCodes(n, store.codebook->num_subspaces, store.codebook->nbits);
        in.get_array(std::span<std::uint8_t>(store.codes.bytes()));
        store.code_resid = in.get_vector<float>(n);
    }
    return store;
}

}  // namespace detail

void save_index(const IvfIndex& index, const std::string& path) {
    BinaryWriter out(path);
    detail::write_tag(out, "IVF1");
    out.put<std::int32_t>(index.nlist());
    out.put<std::int32_t>(static_cast<std::int32_t>(index.centroids.cols()));
    out.put_matrix(index.centroids);
    for (const auto& bucket : index.buckets) {
        out.put<std::int32_t>(static_cast<std::int32_t>(bucket.size()));
        out.put_array(std::span<const VectorId>(bucket));
    }
    detail::write_store(out, index.store);
    out.close();
}

IvfIndex load_ivf(const std::string& path) {
    BinaryReader in(path);
    detail::expect_tag(in, "IVF1", path);
    IvfIndex index;
    const auto nlist = in.get_count();
    const auto dim = in.get_count(1 << 16);
    index.centroids = in.get_matrix<float>(nlist, dim);
    index.buckets.resize(static_cast<std::size_t>(nlist));
    for (auto& bucket : index.buckets) {
        bucket.resize(static_cast<std::size_t>(in.get_count()));
        in.get_array(std::span<VectorId>(bucket));
    }
    index.store = detail::read_store(in);
    return index;
}

std::string index_kind(const std::string& path) {
    BinaryReader in(path);
    char tag[4];
    in.get_array(std::span<char>(tag, 4));
    if (std::memcmp(tag, "IVF1", 4) == 0) return "ivf";
    if (std::memcmp(tag, "HNS1", 4) == 0) return "hnsw";
    throw Error(ErrorCode::format_error, "not an index file: " + path);
}

}  // namespace fastdco
