// fastdco command-line driver.
#include "fastdco/bench.hpp"
#include "fastdco/index.hpp"
#include "fastdco/learn.hpp"
#include "fastdco/training.hpp"
#include "fastdco/vecio.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

using namespace fastdco;

namespace {

struct Options {
    std::string dataset, queries, gt, rotor, out, index, codebook, cascade, classifier;
    std::string kind = "anisotropic";
    std::string rotor_kind = "pca";
    std::string index_type = "ivf";
    std::string classifier_kind = "pca";
    std::vector<std::string> dco{"exact"};
    float m = 8.0f;
    float eps0 = 2.1f;
    int delta_d = 32;
    double target_recall = 0.995;
    int nlist = 256;
    std::vector<int> nprobe{16};
    int M = 16;
    int ef_construction = 200;
    std::vector<int> ef{100};
    int k = 10;
    std::uint64_t seed = 0;
    int threads = 1;
    Eigen::Index n = 100000;
    int dim = 128;
    double decay = 0.9;
    int subspaces = 16;
    int nbits = 8;
    bool opq = false;
    int outer_iters = 10;
    int per_query = 50;
};

void apply_seed_override(Options& o) {
    if (const char* env = std::getenv("FASTDCO_SEED"); env != nullptr && *env != '\0')
        o.seed = std::stoull(env);
}

DcoStrategy make_strategy(const Options& o, const std::string& name) {
    DcoStrategy s;
    s.kind = parse_dco_kind(name);
    s.m = o.m;
    s.epsilon0 = o.eps0;
    s.delta_d = o.delta_d;
    if (s.kind == DcoKind::learned_proj) {
        require(!o.cascade.empty(), "learned-pca needs --cascade");
        s.cascade = std::make_shared<const Cascade>(load_cascade(o.cascade));
    }
    if (s.kind == DcoKind::learned_quant) {
        require(!o.classifier.empty(), "learned-opq needs --classifier");
        s.quant_classifier = std::make_shared<const LinearClassifier>(load_classifier(o.classifier));
    }
    return s;
}

int cmd_gen_data(const Options& o) {
    SyntheticParams params;
    params.decay = o.decay;
    write_fvecs(gen_synthetic(parse_synthetic_kind(o.kind), o.n, o.dim, o.seed, params), o.out);
    std::cout << "wrote " << o.n << " x " << o.dim << " " << o.kind << " vectors to " << o.out << '\n';
    return 0;
}

int cmd_ground_truth(const Options& o) {
    const GroundTruth gt = brute_force_knn(read_fvecs(o.dataset), read_fvecs(o.queries), o.k);
    write_ground_truth(gt, o.out);
    std::cout << "wrote " << gt.num_queries() << " x " << o.k << " neighbours to " << o.out << '\n';
    return 0;
}

int cmd_fit_transform(const Options& o) {
    const Dataset data = read_fvecs(o.dataset);
    Rotor rotor;
    if (o.rotor_kind == "pca") {
        rotor = fit_pca(data, std::nullopt, o.seed);
    } else if (o.rotor_kind == "random") {
        rotor = measure_sigma2(fit_random_rotor(static_cast<int>(data.cols()), o.seed), data);
    } else if (o.rotor_kind == "identity") {
        rotor = measure_sigma2(make_identity_rotor(static_cast<int>(data.cols())), data);
    } else {
        throw Error(ErrorCode::invalid_argument, "unknown rotor kind '" + o.rotor_kind + "'");
    }
    save_rotor(rotor, o.out);
    std::cout << "wrote " << to_string(rotor.kind) << " rotor (D=" << rotor.dim() << ") to " << o.out << '\n';
    return 0;
}

int cmd_train_quant(const Options& o) {
    const Rotor rotor = load_rotor(o.rotor);
    const Dataset rotated = apply_rows(rotor, read_fvecs(o.dataset));
    Codebook cb;
    if (o.opq) {
        OpqOptions opts;
        opts.outer_iters = o.outer_iters;
        opts.seed = o.seed;
        const OpqResult r = opq_train(rotated, o.subspaces, o.nbits, opts);
        cb = r.codebook;
        std::cout << "opq objective:";
        for (const double v : r.objective) std::cout << ' ' << v;
        std::cout << '\n';
    } else {
        cb = pq_train(rotated, o.subspaces, o.nbits, o.seed);
        std::cout << "pq error " << quantization_error(cb, rotated) << '\n';
    }
    save_codebook(cb, o.out);
    return 0;
}

int cmd_build_index(const Options& o) {
    const Dataset data = read_fvecs(o.dataset);
    const Rotor rotor = load_rotor(o.rotor);
    std::optional<Codebook> cb;
    if (!o.codebook.empty()) cb = load_codebook(o.codebook);
    const Codebook* cbp = cb ? &*cb : nullptr;
    if (o.index_type == "ivf") {
        IvfBuildOptions opts;
        opts.nlist = o.nlist;
        opts.seed = o.seed;
        save_index(ivf_build(data, rotor, opts, cbp), o.out);
    } else if (o.index_type == "hnsw") {
        HnswBuildOptions opts;
        opts.M = o.M;
        opts.ef_construction = o.ef_construction;
        opts.seed = o.seed;
        save_index(hnsw_build(data, rotor, opts, cbp), o.out);
    } else {
        throw Error(ErrorCode::invalid_argument, "index type must be ivf or hnsw");
    }
    std::cout << "wrote " << o.index_type << " index to " << o.out << '\n';
    return 0;
}

int cmd_train_classifier(const Options& o) {
    require(index_kind(o.index) == "ivf", "training samples are collected with an IVF index");
    const IvfIndex index = load_ivf(o.index);
    CollectOptions co;
    co.k = o.k;
    co.per_query_visits = o.per_query;
    co.delta_d = o.delta_d;
    co.seed = o.seed;
    const TrainingSet ts = collect_training(index, read_fvecs(o.queries), co);
    SgdOptions sgd;
    sgd.seed = o.seed;
    if (o.classifier_kind == "pca") {
        const Cascade c = build_cascade(ts, o.target_recall, sgd);
        save_cascade(c, o.out);
        for (const auto& st : c.stages)
            std::cout << "d=" << st.checkpoint << " r_i=" << st.target_recall << " m1=" << st.classifier.m1
                      << " beta=" << st.classifier.beta << " train_recall0=" << st.train_recall0
                      << " audit_recall0=" << st.audit_recall0 << " audit_pruned=" << st.audit_pruned_rate << '\n';
    } else if (o.classifier_kind == "opq") {
        const LinearClassifier c = build_quant_classifier(ts, o.target_recall, sgd);
        save_classifier(c, o.out);
        std::cout << "m1=" << c.m1 << " w_resid=" << c.extra_weights.at(0) << " beta=" << c.beta << '\n';
    } else {
        throw Error(ErrorCode::invalid_argument, "classifier kind must be pca or opq");
    }
    return 0;
}

int cmd_search(const Options& o) {
    const Dataset queries = read_fvecs(o.queries);
    const DcoStrategy s = make_strategy(o, o.dco.at(0));
    RowMatrixXi ids(queries.rows(), o.k);
    ids.setConstant(-1);
    SearchCounters total;
    const std::string kind = index_kind(o.index);
    std::optional<IvfIndex> ivf;
    std::optional<HnswIndex> hnsw;
    if (kind == "ivf") ivf = load_ivf(o.index);
    else hnsw = load_hnsw(o.index);
    for (Eigen::Index i = 0; i < queries.rows(); ++i) {
        const Eigen::VectorXf q = queries.row(i).transpose();
        const SearchResult r = ivf ? ivf_search(*ivf, q, o.k, o.nprobe.at(0), s)
                                   : hnsw_search(*hnsw, q, o.k, std::max(o.ef.at(0), o.k), s);
        for (std::size_t j = 0; j < r.neighbors.size(); ++j) ids(i, static_cast<Eigen::Index>(j)) = r.neighbors[j].id;
        total += r.counters;
    }
    if (!o.out.empty()) write_ivecs(ids, o.out);
    std::cout << "queries " << queries.rows() << "  dco calls " << total.dco_calls << "  pruned " << total.pruned_count
              << "  exact " << total.exact_count << '\n';
    if (!o.gt.empty()) {
        const GroundTruth gt = read_ground_truth(o.gt);
        double recall = 0.0;
        for (Eigen::Index i = 0; i < queries.rows(); ++i) {
            int hit = 0;
            for (int a = 0; a < o.k; ++a)
                for (int b = 0; b < o.k; ++b) hit += ids(i, a) == gt.ids(i, b) ? 1 : 0;
            recall += static_cast<double>(hit) / o.k;
        }
        std::cout << "recall@" << o.k << " " << recall / static_cast<double>(queries.rows()) << '\n';
    }
    return 0;
}

int cmd_bench(const Options& o) {
    const Dataset queries = read_fvecs(o.queries);
    const GroundTruth gt = read_ground_truth(o.gt);
    BenchConfig cfg;
    cfg.dataset = o.dataset.empty() ? o.queries : o.dataset;
    cfg.k = o.k;
    cfg.threads = o.threads;
    cfg.seed = o.seed;
    cfg.fingerprint = {o.index, o.cascade, o.classifier, o.gt};
    for (const auto& name : o.dco) cfg.strategies.push_back({name, make_strategy(o, name)});

    BenchReport report;
    if (index_kind(o.index) == "ivf") {
        cfg.grid = o.nprobe;
        report = run_bench(load_ivf(o.index), queries, gt, cfg);
    } else {
        cfg.grid = o.ef;
        report = run_bench(load_hnsw(o.index), queries, gt, cfg);
    }
    std::cout << report.table();
    if (!o.out.empty()) {
        std::ofstream f(o.out);
        require(static_cast<bool>(f), "cannot write " + o.out, ErrorCode::io_failure);
        f << report.tsv();
    } else {
        std::cout << '\n' << report.tsv();
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Distance-comparison operators for approximate nearest-neighbour search"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* c) { c->add_option("--seed", o.seed, "PRNG seed (FASTDCO_SEED overrides)"); };
    auto dco_flags = [&](CLI::App* c) {
        c->add_option("--m", o.m, "quantile multiplier");
        c->add_option("--eps0", o.eps0, "ADSampling epsilon0");
        c->add_option("--delta-d", o.delta_d, "checkpoint step");
        c->add_option("--cascade", o.cascade, "cascade file for learned-pca");
        c->add_option("--classifier", o.classifier, "classifier file for learned-opq");
        c->add_option("--k", o.k, "neighbours per query");
    };

    auto* gen = app.add_subcommand("gen-data", "write a synthetic dataset");
    gen->add_option("--kind", o.kind, "isotropic | anisotropic | clustered");
    gen->add_option("--n", o.n, "number of vectors");
    gen->add_option("--dim", o.dim, "dimension");
    gen->add_option("--decay", o.decay, "anisotropic std ratio");
    gen->add_option("--out", o.out)->required();
    common(gen);

    auto* gt = app.add_subcommand("ground-truth", "exact K nearest neighbours");
    gt->add_option("--dataset", o.dataset)->required();
    gt->add_option("--queries", o.queries)->required();
    gt->add_option("--k", o.k);
    gt->add_option("--out", o.out)->required();

    auto* fit = app.add_subcommand("fit-transform", "fit a rotor");
    fit->add_option("--dataset", o.dataset)->required();
    fit->add_option("--rotor", o.rotor_kind, "pca | random | identity");
    fit->add_option("--out", o.out)->required();
    common(fit);

    auto* tq = app.add_subcommand("train-quant", "train a PQ or OPQ codebook in rotated space");
    tq->add_option("--dataset", o.dataset)->required();
    tq->add_option("--rotor", o.rotor)->required();
    tq->add_option("--subspaces", o.subspaces);
    tq->add_option("--nbits", o.nbits);
    tq->add_flag("--opq", o.opq, "learn an extra rotation");
    tq->add_option("--outer-iters", o.outer_iters);
    tq->add_option("--out", o.out)->required();
    common(tq);

    auto* bi = app.add_subcommand("build-index", "build an IVF or HNSW index");
    bi->add_option("--dataset", o.dataset)->required();
    bi->add_option("--rotor", o.rotor)->required();
    bi->add_option("--type", o.index_type, "ivf | hnsw");
    bi->add_option("--codebook", o.codebook, "store PQ codes for learned-opq");
    bi->add_option("--nlist", o.nlist);
    bi->add_option("--M", o.M);
    bi->add_option("--ef-construction", o.ef_construction);
    bi->add_option("--out", o.out)->required();
    common(bi);

    auto* tc = app.add_subcommand("train-classifier", "train a cascade (pca) or quantization classifier (opq)");
    tc->add_option("--index", o.index, "IVF index")->required();
    tc->add_option("--queries", o.queries, "training queries, disjoint from evaluation queries")->required();
    tc->add_option("--kind", o.classifier_kind, "pca | opq");
    tc->add_option("--k", o.k);
    tc->add_option("--delta-d", o.delta_d);
    tc->add_option("--target-recall", o.target_recall);
    tc->add_option("--per-query", o.per_query, "label-1 samples per query");
    tc->add_option("--out", o.out)->required();
    common(tc);

    auto* se = app.add_subcommand("search", "run queries through an index");
    se->add_option("--index", o.index)->required();
    se->add_option("--queries", o.queries)->required();
    se->add_option("--gt", o.gt, "ground truth for recall");
    se->add_option("--dco", o.dco)->expected(1);
    se->add_option("--nprobe", o.nprobe)->expected(1);
    se->add_option("--ef", o.ef)->expected(1);
    se->add_option("--out", o.out, "result ids (ivecs)");
    dco_flags(se);

    auto* be = app.add_subcommand("bench", "sweep strategies and search parameters");
    be->add_option("--index", o.index)->required();
    be->add_option("--queries", o.queries)->required();
    be->add_option("--gt", o.gt)->required();
    be->add_option("--dataset", o.dataset, "dataset label for the report");
    be->add_option("--dco", o.dco, "comma-separated strategies")->delimiter(',');
    be->add_option("--nprobe", o.nprobe, "comma-separated grid")->delimiter(',');
    be->add_option("--ef", o.ef, "comma-separated grid")->delimiter(',');
    be->add_option("--threads", o.threads);
    be->add_option("--out", o.out, "TSV report");
    dco_flags(be);
    common(be);

    CLI11_PARSE(app, argc, argv);
    apply_seed_override(o);

    try {
        if (*gen) return cmd_gen_data(o);
        if (*gt) return cmd_ground_truth(o);
        if (*fit) return cmd_fit_transform(o);
        if (*tq) return cmd_train_quant(o);
        if (*bi) return cmd_build_index(o);
        if (*tc) return cmd_train_classifier(o);
        if (*se) return cmd_search(o);
        if (*be) return cmd_bench(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
