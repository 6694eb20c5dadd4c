#pragma once

#include "fastdco/common.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace fastdco {

/// One training example for the "is dis > tau?" classifier.
/// label 0: exact_dis <= tau (a true neighbour), label 1: exact_dis > tau.
struct LabeledSample {
    float approx = 0.0f;  // approximate squared distance dis'
    float tau = 0.0f;
    std::vector<float> extras;
    int label = 0;
    float exact_dis = 0.0f;
    std::int32_t query = 0;
};

inline int label_for(float exact_dis, float tau) { return exact_dis > tau ? 1 : 0; }

/// Predicts 1 ("prune") iff m1 * dis' + sum(extra_weights * extras) + beta > tau.
struct LinearClassifier {
    float m1 = 1.0f;
    std::vector<float> extra_weights;
    float beta = 0.0f;

    float score(float approx, std::span<const float> extras) const {
        float s = m1 * approx;
        for (std::size_t i = 0; i < extra_weights.size(); ++i) s += extra_weights[i] * extras[i];
        return s + beta;
    }
    bool predict(float approx, float tau, std::span<const float> extras = {}) const {
        return score(approx, extras) > tau;
    }
    bool predict(const LabeledSample& s) const { return predict(s.approx, s.tau, s.extras); }
    std::size_t num_extras() const { return extra_weights.size(); }
};

struct CascadeStage {
    int checkpoint = 0;
    float target_recall = 1.0f;  // r_i
    LinearClassifier classifier;
    float train_recall0 = 0.0f;
    float audit_recall0 = 0.0f;
    float audit_pruned_rate = 0.0f;
};

/// One classifier per projection checkpoint below D, ascending.
struct Cascade {
    int dim = 0;
    int delta_d = 0;
    float target_recall = 0.995f;
    std::vector<CascadeStage> stages;

    /// Stage classifier for checkpoint `d`, or nullptr.
    const LinearClassifier* at(int d) const;
};

/// Logistic model over raw features z = (dis', tau, extras...): p(label 1) = sigmoid(w.z + b).
struct LogisticModel {
    Eigen::VectorXd w;
    double b = 0.0;
};

/// Feature matrix rows (dis', tau, extras...) and 0/1 labels.
Eigen::MatrixXd feature_matrix(std::span<const LabeledSample> samples);
Eigen::VectorXd label_vector(std::span<const LabeledSample> samples);

/// Mean binary cross-entropy.
double bce_loss(const LogisticModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);
/// Gradient of bce_loss with respect to (w, b), packed as a LogisticModel.
LogisticModel bce_gradient(const LogisticModel& model, const Eigen::MatrixXd& x, const Eigen::VectorXd& y);

struct Standardizer {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static Standardizer fit(const Eigen::MatrixXd& x);
    Eigen::MatrixXd transform(const Eigen::MatrixXd& x) const;
    /// Converts a model on standardized features into the equivalent model on raw features.
    LogisticModel fold(const LogisticModel& standardized) const;
};

struct SgdOptions {
    double learning_rate = 0.1;
    int epochs = 20;
    int batch_size = 256;
    std::uint64_t seed = 0;
    int newton_steps = 50;  // damped Newton refinement after SGD; 0 keeps the SGD iterate
};

struct LogisticFit {
    LogisticModel raw;                // on raw features
    std::vector<double> epoch_loss;   // mean BCE after each epoch (standardized space)
    double final_loss = 0.0;          // after Newton refinement
};

LogisticFit fit_logistic(std::span<const LabeledSample> samples, const SgdOptions& options);

/// Divides out the tau weight: w1 dis' + w2 tau + we.e + b > 0  <=>  m1 dis' + extras + beta > tau.
LinearClassifier reduce(const LogisticModel& model);

LinearClassifier train_logistic(std::span<const LabeledSample> samples, const SgdOptions& options = {});

/// Fraction of label-0 samples predicted 0.
double label0_recall(const LinearClassifier& clf, std::span<const LabeledSample> samples);
/// Fraction of label-1 samples predicted 1 (the pruned rate).
double pruned_rate(const LinearClassifier& clf, std::span<const LabeledSample> samples);

/// Largest beta (to binary-search tolerance) with label-0 recall >= target_recall.
LinearClassifier calibrate_beta(LinearClassifier clf, std::span<const LabeledSample> samples, double target_recall);

/// r_i = 1 - (1 - r) / (D / delta_d)
double stage_target_recall(double r, int dim, int delta_d);

/// Labeled samples gathered for training, one set per checkpoint below D.
struct TrainingSet {
    int dim = 0;
    int delta_d = 0;
    std::vector<int> checkpoints;
    std::vector<std::vector<LabeledSample>> per_checkpoint;
    std::vector<LabeledSample> quant;  // features (adc, tau, code residual)
};

Cascade build_cascade(const TrainingSet& training, double target_recall, const SgdOptions& options = {});

/// Single calibrated classifier over the quantization features of `training.quant`.
LinearClassifier build_quant_classifier(const TrainingSet& training, double target_recall,
                                        const SgdOptions& options = {});

// Layout (little-endian): float32 m1, int32 n_extra, float32 extras[n_extra], float32 beta.
void write_classifier(BinaryWriter& out, const LinearClassifier& clf);
LinearClassifier read_classifier(BinaryReader& in);
void save_classifier(const LinearClassifier& clf, const std::string& path);
LinearClassifier load_classifier(const std::string& path);

// Layout: int32 D, int32 delta_d, float32 r, int32 stages, then per stage
// int32 checkpoint, float32 r_i, classifier record.
void save_cascade(const Cascade& cascade, const std::string& path);
Cascade load_cascade(const std::string& path);

}  // namespace fastdco
