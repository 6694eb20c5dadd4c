#include "fastdco/learn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fastdco {

const LinearClassifier* Cascade::at(int d) const {
    for (const auto& stage : stages)
        if (stage.checkpoint == d) return &stage.classifier;
    return nullptr;
}

Eigen::MatrixXd feature_matrix(std::span<const LabeledSample> samples) {
    require(!samples.empty(), "no training samples");
    const std::size_t extras = samples.front().extras.size();
    Eigen::MatrixXd x(static_cast<Eigen::Index>(samples.size()), static_cast<Eigen::Index>(2 + extras));
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        require(s.extras.size() == extras, "samples disagree on feature arity", ErrorCode::dimension_mismatch);
        const auto row = static_cast<Eigen::Index>(i);
        x(row, 0) = s.approx;
        x(row, 1) = s.tau;
        for (std::size_t j = 0; j < extras; ++j) x(row, static_cast<Eigen::Index>(2 + j)) = s.extras[j];
    }
    return x;
}

Eigen::VectorXd label_vector(std::span<const LabeledSample> samples) {
    Eigen::VectorXd y(static_cast<Eigen::Index>(samples.size()));
    for (std::size_t i = 0; i < samples.size(); ++i) y(static_cast<Eigen::Index>(i)) = samples[i].label;
    return y;
}

namespace {

double softplus(double s) { return s > 0 ? s + std::log1p(std::exp(-s)) : std::log1p(std::exp(s)); }

double sigmoid(double s) {
    if (s >= 0) return 1.0 / (1.0 + std::exp(-s));
    const double e = std::exp(s);
    return e / (1.0 + e);
}

}  // namespace

double bce_loss(const LogisticModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Eigen::VectorXd s = (x * model.w).array() + model.b;
    double loss = 0.0;
    for (Eigen::Index i = 0; i < s.size(); ++i) loss += softplus(s(i)) - y(i) * s(i);
    return loss / static_cast<double>(s.size());
}

LogisticModel bce_gradient(const LogisticModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
    const Eigen::VectorXd s = (x * model.w).array() + model.b;
    Eigen::VectorXd residual(s.size());
    for (Eigen::Index i = 0; i < s.size(); ++i) residual(i) = sigmoid(s(i)) - y(i);
    const double inv_n = 1.0 / static_cast<double>(s.size());
    LogisticModel grad;
    grad.w = x.transpose() * residual * inv_n;
    grad.b = residual.sum() * inv_n;
    return grad;
}

Standardizer Standardizer::fit(const Eigen::MatrixXd& x) {
    Standardizer st;
    st.mean = x.colwise().mean().transpose();
    st.scale.resize(x.cols());
    for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double var = (x.col(j).array() - st.mean(j)).square().mean();
        st.scale(j) = var > 0 ? std::sqrt(var) : 1.0;
    }
    return st;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& x) const {
    return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

LogisticModel Standardizer::fold(const LogisticModel& standardized) const {
    LogisticModel raw;
    raw.w = standardized.w.cwiseQuotient(scale);
    raw.b = standardized.b - raw.w.dot(mean);
    return raw;
}

namespace {

/// Damped Newton on the full-batch loss. A step is taken only if it lowers
/// the loss, halving up to 30 times; stops when no halving helps.
void newton_refine(LogisticModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y, int steps) {
    const Eigen::Index n = x.rows();
    const Eigen::Index p = x.cols();
    Eigen::MatrixXd xa(n, p + 1);
    xa << x, Eigen::VectorXd::Ones(n);
    Eigen::VectorXd theta(p + 1);
    theta << model.w, model.b;
    double loss = bce_loss(model, x, y);
    for (int it = 0; it < steps; ++it) {
        const Eigen::ArrayXd prob = (1.0 + (-(xa * theta).array()).exp()).inverse();
        const Eigen::VectorXd grad = xa.transpose() * (prob.matrix() - y) / static_cast<double>(n);
        const Eigen::VectorXd weight = (prob * (1.0 - prob)).matrix();
        Eigen::MatrixXd hess = xa.transpose() * weight.asDiagonal() * xa / static_cast<double>(n);
        hess.diagonal().array() += 1e-10;
        const Eigen::VectorXd step = hess.ldlt().solve(grad);
        if (!step.allFinite()) return;
        double scale = 1.0;
        bool moved = false;
        for (int half = 0; half < 30 && !moved; ++half, scale *= 0.5) {
            const Eigen::VectorXd next = theta - scale * step;
            const LogisticModel trial{next.head(p), next(p)};
            const double l = bce_loss(trial, x, y);
            if (l < loss) {
                theta = next;
                loss = l;
                moved = true;
            }
        }
        if (!moved) break;
    }
    model.w = theta.head(p);
    model.b = theta(p);
}

}  // namespace

LogisticFit fit_logistic(std::span<const LabeledSample> samples, const SgdOptions& options) {
    require(options.epochs >= 1 && options.batch_size >= 1 && options.learning_rate > 0 && options.newton_steps >= 0,
            "invalid SGD options");
    const Eigen::MatrixXd raw = feature_matrix(samples);
    const Eigen::VectorXd y = label_vector(samples);
    const double positives = y.sum();
    require(positives > 0 && positives < static_cast<double>(y.size()),
            "training samples must contain both labels");

    const Standardizer st = Standardizer::fit(raw);
    const Eigen::MatrixXd x = st.transform(raw);
    const Eigen::Index n = x.rows();

    LogisticModel model;
    model.w = Eigen::VectorXd::Zero(x.cols());
    model.b = 0.0;

    std::mt19937_64 rng(options.seed);
    std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), Eigen::Index{0});

    LogisticFit fit;
    Eigen::MatrixXd xb;
    Eigen::VectorXd yb;
    for (int epoch = 0; epoch < options.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = options.learning_rate / std::sqrt(static_cast<double>(epoch + 1));
        for (Eigen::Index start = 0; start < n; start += options.batch_size) {
            const Eigen::Index len = std::min<Eigen::Index>(options.batch_size, n - start);
            xb.resize(len, x.cols());
            yb.resize(len);
            for (Eigen::Index i = 0; i < len; ++i) {
                const Eigen::Index src = order[static_cast<std::size_t>(start + i)];
                xb.row(i) = x.row(src);
                yb(i) = y(src);
            }
            const LogisticModel grad = bce_gradient(model, xb, yb);
            model.w -= lr * grad.w;
            model.b -= lr * grad.b;
        }
        fit.epoch_loss.push_back(bce_loss(model, x, y));
    }
    if (options.newton_steps > 0) newton_refine(model, x, y, options.newton_steps);
    fit.final_loss = bce_loss(model, x, y);
    fit.raw = st.fold(model);
    return fit;
}

LinearClassifier reduce(const LogisticModel& model) {
    require(model.w.size() >= 2, "model needs dis' and tau weights");
    LinearClassifier clf;
    const auto extras = static_cast<std::size_t>(model.w.size() - 2);
    const double tau_weight = model.w(1);
    if (!(tau_weight < 0.0)) {
        // A non-negative tau weight has no "> tau" reading; fall back to the
        // uncorrected distance and let calibration place the boundary.
        clf.m1 = 1.0f;
        clf.extra_weights.assign(extras, 0.0f);
        clf.beta = 0.0f;
        return clf;
    }
    const double k = -tau_weight;
    clf.m1 = static_cast<float>(model.w(0) / k);
    clf.extra_weights.resize(extras);
    for (std::size_t j = 0; j < extras; ++j)
        clf.extra_weights[j] = static_cast<float>(model.w(static_cast<Eigen::Index>(2 + j)) / k);
    clf.beta = static_cast<float>(model.b / k);
    return clf;
}

LinearClassifier train_logistic(std::span<const LabeledSample> samples, const SgdOptions& options) {
    return reduce(fit_logistic(samples, options).raw);
}

double label0_recall(const LinearClassifier& clf, std::span<const LabeledSample> samples) {
    std::size_t total = 0, kept = 0;
    for (const auto& s : samples) {
        if (s.label != 0) continue;
        ++total;
        if (!clf.predict(s)) ++kept;
    }
    return total == 0 ? 1.0 : static_cast<double>(kept) / static_cast<double>(total);
}

double pruned_rate(const LinearClassifier& clf, std::span<const LabeledSample> samples) {
    std::size_t total = 0, pruned = 0;
    for (const auto& s : samples) {
        if (s.label != 1) continue;
        ++total;
        if (clf.predict(s)) ++pruned;
    }
    return total == 0 ? 0.0 : static_cast<double>(pruned) / static_cast<double>(total);
}

LinearClassifier calibrate_beta(LinearClassifier clf, std::span<const LabeledSample> samples, double target_recall) {
    require(target_recall > 0.0 && target_recall <= 1.0, "target recall must be in (0, 1]");

    // margin_i = tau - (score without beta); label-0 sample i is kept iff beta <= margin_i.
    std::vector<double> margins;
    std::vector<double> taus;
    for (const auto& s : samples) {
        taus.push_back(s.tau);
        if (s.label != 0) continue;
        LinearClassifier no_beta = clf;
        no_beta.beta = 0.0f;
        margins.push_back(static_cast<double>(s.tau) - static_cast<double>(no_beta.score(s.approx, s.extras)));
    }
    require(!margins.empty(), "calibration needs label-0 samples");

    auto recall_at = [&](double beta) {
        LinearClassifier c = clf;
        c.beta = static_cast<float>(beta);
        return label0_recall(c, samples);
    };

    double lo = *std::min_element(margins.begin(), margins.end()) - 1.0;
    double hi = *std::max_element(margins.begin(), margins.end()) + 1.0;
    if (recall_at(hi) >= target_recall) {
        lo = hi;
    } else {
        std::nth_element(taus.begin(), taus.begin() + static_cast<std::ptrdiff_t>(taus.size() / 2), taus.end());
        const double median_tau = std::abs(taus[taus.size() / 2]);
        const double tol = std::max(1e-6 * median_tau, 1e-12);
        for (int iter = 0; iter < 200 && hi - lo > tol; ++iter) {
            const double mid = 0.5 * (lo + hi);
            if (recall_at(mid) >= target_recall) lo = mid;
            else hi = mid;
        }
    }

    clf.beta = static_cast<float>(lo);
    while (label0_recall(clf, samples) < target_recall)
        clf.beta = std::nextafter(clf.beta, -std::numeric_limits<float>::infinity());
    return clf;
}

double stage_target_recall(double r, int dim, int delta_d) {
    require(delta_d >= 1 && dim >= delta_d, "delta_d must be in [1, D]");
    return 1.0 - (1.0 - r) / (static_cast<double>(dim) / static_cast<double>(delta_d));
}

namespace {

bool is_audit(const LabeledSample& s) { return s.query % 10 == 9; }

struct Split {
    std::vector<LabeledSample> train;
    std::vector<LabeledSample> audit;
};

Split split_samples(const std::vector<LabeledSample>& samples) {
    Split split;
    for (const auto& s : samples) (is_audit(s) ? split.audit : split.train).push_back(s);
    // tiny sets: train on everything rather than fail
    if (split.train.empty()) split.train = samples;
    return split;
}

}  // namespace

Cascade build_cascade(const TrainingSet& training, double target_recall, const SgdOptions& options) {
    require(training.checkpoints.size() == training.per_checkpoint.size(), "training set is inconsistent");
    Cascade cascade;
    cascade.dim = training.dim;
    cascade.delta_d = training.delta_d;
    cascade.target_recall = static_cast<float>(target_recall);
    const double stage_recall = stage_target_recall(target_recall, training.dim, training.delta_d);

    for (std::size_t c = 0; c < training.checkpoints.size(); ++c) {
        const int d = training.checkpoints[c];
        require(d < training.dim, "cascade checkpoints must lie below D");
        require(cascade.stages.empty() || d > cascade.stages.back().checkpoint,
                "cascade checkpoints must be strictly increasing");
        const Split split = split_samples(training.per_checkpoint[c]);

        SgdOptions stage_options = options;
        stage_options.seed = options.seed + c;
        CascadeStage stage;
        stage.checkpoint = d;
        stage.target_recall = static_cast<float>(stage_recall);
        stage.classifier = calibrate_beta(train_logistic(split.train, stage_options), split.train, stage_recall);
        stage.train_recall0 = static_cast<float>(label0_recall(stage.classifier, split.train));
        stage.audit_recall0 = static_cast<float>(label0_recall(stage.classifier, split.audit));
        stage.audit_pruned_rate = static_cast<float>(pruned_rate(stage.classifier, split.audit));
        cascade.stages.push_back(std::move(stage));
    }
    return cascade;
}

LinearClassifier build_quant_classifier(const TrainingSet& training, double target_recall, const SgdOptions& options) {
    const Split split = split_samples(training.quant);
    return calibrate_beta(train_logistic(split.train, options), split.train, target_recall);
}

void write_classifier(BinaryWriter& out, const LinearClassifier& clf) {
    out.put<float>(clf.m1);
    out.put<std::int32_t>(static_cast<std::int32_t>(clf.extra_weights.size()));
    out.put_array(std::span<const float>(clf.extra_weights));
    out.put<float>(clf.beta);
}

LinearClassifier read_classifier(BinaryReader& in) {
    LinearClassifier clf;
    clf.m1 = in.get<float>();
    clf.extra_weights.resize(static_cast<std::size_t>(in.get_count(1024)));
    in.get_array(std::span<float>(clf.extra_weights));
    clf.beta = in.get<float>();
    return clf;
}

void save_classifier(const LinearClassifier& clf, const std::string& path) {
    BinaryWriter out(path);
    write_classifier(out, clf);
    out.close();
}

LinearClassifier load_classifier(const std::string& path) {
    BinaryReader in(path);
    return read_classifier(in);
}

void save_cascade(const Cascade& cascade, const std::string& path) {
    BinaryWriter out(path);
    out.put<std::int32_t>(cascade.dim);
    out.put<std::int32_t>(cascade.delta_d);
    out.put<float>(cascade.target_recall);
    out.put<std::int32_t>(static_cast<std::int32_t>(cascade.stages.size()));
    for (const auto& stage : cascade.stages) {
        out.put<std::int32_t>(stage.checkpoint);
        out.put<float>(stage.target_recall);
        write_classifier(out, stage.classifier);
    }
    out.close();
}

Cascade load_cascade(const std::string& path) {
    BinaryReader in(path);
    Cascade cascade;
    cascade.dim = in.get_count();
    cascade.delta_d = in.get_count();
    cascade.target_recall = in.get<float>();
    const auto stages = in.get_count(1 << 20);
    for (std::int32_t i = 0; i < stages; ++i) {
        CascadeStage stage;
        stage.checkpoint = in.get_count();
        stage.target_recall = in.get<float>();
        stage.classifier = read_classifier(in);
        cascade.stages.push_back(std::move(stage));
    }
    return cascade;
}

}  // namespace fastdco
