#pragma once

#include "fastdco/common.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fastdco {

enum class RotorKind : std::int32_t { pca = 0, random = 1, identity = 2 };

const char* to_string(RotorKind kind);

/// Centering plus orthogonal rotation: apply(v) = rotation * (v - mean).
///
/// Rows of `rotation` are projection directions in order of use. `sigma2[i]`
/// is the variance of rotated dimension i; it is empty for a random rotor
/// until measure_sigma2 has been run.
struct Rotor {
    RotorKind kind = RotorKind::identity;
    RowMatrixXf rotation;
    Eigen::VectorXf mean;
    Eigen::VectorXf sigma2;

    int dim() const { return static_cast<int>(rotation.rows()); }
    bool has_sigma2() const { return sigma2.size() == rotation.rows(); }
};

/// Per-query state shared by every distance comparison against that query.
struct QueryContext {
    Eigen::VectorXf q_rot;
    float q_norm2 = 0.0f;
    int delta_d = 0;
    std::vector<int> checkpoints;     // delta_d, 2*delta_d, ..., D
    std::vector<float> sigma_suffix;  // 4 * sum_{i >= d} q_i^2 sigma2_i per checkpoint (0-based dims)
    std::vector<float> sigma;         // sqrt(sigma_suffix)

    int dim() const { return static_cast<int>(q_rot.size()); }
    /// Index of checkpoint `d`, or -1 when `d` is not a checkpoint.
    int checkpoint_index(int d) const;
};

Rotor fit_pca(const Dataset& data, std::optional<Eigen::Index> sample_size = std::nullopt,
              std::uint64_t seed = 0);
Rotor fit_random_rotor(int dim, std::uint64_t seed);
Rotor make_identity_rotor(int dim);

/// Replaces sigma2 with the empirical variance of each rotated dimension.
Rotor measure_sigma2(Rotor rotor, const Dataset& data);

Eigen::VectorXf apply(const Rotor& rotor, const Eigen::Ref<const Eigen::VectorXf>& v);
/// Row-wise apply over a whole matrix.
RowMatrixXf apply_rows(const Rotor& rotor, const Dataset& data);

QueryContext make_query_context(const Rotor& rotor, const Eigen::Ref<const Eigen::VectorXf>& q, int delta_d);
/// Builds a context for a query that is already rotated.
QueryContext make_query_context_rotated(const Rotor& rotor, Eigen::VectorXf q_rot, int delta_d);

/// ||x - mean||^2 for every row.
Eigen::VectorXf norms2(const Dataset& data, const Rotor& rotor);

/// Checkpoints delta_d, 2*delta_d, ..., always ending at exactly `dim`.
std::vector<int> make_checkpoints(int dim, int delta_d);

// Layout (little-endian): int32 D, int32 kind, float32 mean[D],
// float32 rotation[D*D] row-major, int32 has_sigma2, float32 sigma2[D] if has_sigma2.
void save_rotor(const Rotor& rotor, const std::string& path);
Rotor load_rotor(const std::string& path);
void write_rotor(BinaryWriter& out, const Rotor& rotor);
Rotor read_rotor(BinaryReader& in);

}  // namespace fastdco
