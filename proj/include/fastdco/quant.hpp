#pragma once

#include "fastdco/common.hpp"
#include "fastdco/transform.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace fastdco {

struct KMeansOptions {
    int max_iters = 25;
    std::uint64_t seed = 0;
};

struct KMeansResult {
    RowMatrixXf centroids;
    std::vector<std::int32_t> assignment;
    /// Sum of squared distances to the assigned centroid after each assignment step.
    std::vector<double> objective;
};

/// Lloyd iterations from k-means++ seeding (or from `init` when given).
/// Empty clusters are re-seeded from the points farthest from their centroid.
/// Nearest-centroid ties go to the lower centroid id.
KMeansResult kmeans(const RowMatrixXf& points, int k, const KMeansOptions& options = {},
                    const RowMatrixXf* init = nullptr);

/// Index of the nearest row of `centroids` (lowest index on ties) and its squared distance.
std::pair<std::int32_t, float> nearest_centroid(const RowMatrixXf& centroids,
                                                const Eigen::Ref<const Eigen::RowVectorXf>& x);

using PqCode = std::vector<std::uint8_t>;
/// [num_subspaces][2^nbits] squared sub-distances from the rotated query.
using LookupTable = RowMatrixXf;

struct Codebook {
    int dim = 0;
    int num_subspaces = 0;
    int nbits = 8;
    std::vector<RowMatrixXf> centroids;  // per subspace: ksub x sub_dim
    std::optional<RowMatrixXf> rotation;

    int sub_dim() const { return dim / num_subspaces; }
    int ksub() const { return 1 << nbits; }
    Eigen::VectorXf rotate(const Eigen::Ref<const Eigen::VectorXf>& v) const;
};

Codebook pq_train(const Dataset& data, int num_subspaces, int nbits, std::uint64_t seed, int max_iters = 25);

struct OpqOptions {
    int outer_iters = 10;
    int inner_iters = 4;       // warm-started Lloyd iterations per outer step
    int kmeans_iters = 25;     // first (cold) codebook training
    Eigen::Index sample_size = 65536;
    std::uint64_t seed = 0;
};

struct OpqResult {
    Codebook codebook;
    /// Total squared reconstruction error on the training sample after each outer iteration.
    std::vector<double> objective;
};

/// OPQ starts from the PCA rotation with its axes regrouped so that every
/// subspace gets a similar product of eigenvalues (greedy, largest first).
RowMatrixXf eigenvalue_allocation(const Rotor& pca, int num_subspaces);

OpqResult opq_train(const Dataset& data, int num_subspaces, int nbits, const OpqOptions& options = {});

/// Orthogonal R minimising sum ||R x_i - y_i||^2.
RowMatrixXf procrustes_rotation(const RowMatrixXf& x, const RowMatrixXf& y);

PqCode pq_encode(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXf>& v);
/// Encodes an already rotated vector.
PqCode pq_encode_rotated(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXf>& v_rot);
Eigen::VectorXf reconstruct(const Codebook& codebook, const PqCode& code);
LookupTable build_lut(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXf>& q);
float adc(const LookupTable& lut, const PqCode& code);
float adc(const LookupTable& lut, const std::uint8_t* code);
float code_residual(const Codebook& codebook, const Eigen::Ref<const Eigen::VectorXf>& v, const PqCode& code);

/// Sum over rows of ||rotate(x) - reconstruct(encode(x))||^2.
double quantization_error(const Codebook& codebook, const Dataset& data);

/// n codes of num_subspaces x nbits bits, packed LSB-first with no padding between codes.
class PackedCodes {
public:
    PackedCodes() = default;
    PackedCodes(Eigen::Index n, int num_subspaces, int nbits);

    void set(Eigen::Index i, const PqCode& code);
    PqCode get(Eigen::Index i) const;

    Eigen::Index size() const { return n_; }
    int num_subspaces() const { return num_subspaces_; }
    int nbits() const { return nbits_; }
    std::uint64_t size_bits() const;
    const std::vector<std::uint8_t>& bytes() const { return bytes_; }
    std::vector<std::uint8_t>& bytes() { return bytes_; }

private:
    Eigen::Index n_ = 0;
    int num_subspaces_ = 0;
    int nbits_ = 8;
    std::vector<std::uint8_t> bytes_;
};

// Layout (little-endian): int32 D, int32 num_subspaces, int32 nbits, int32 has_rotation,
// float32 rotation[D*D] if present, float32 centroids[num_subspaces][2^nbits][sub_dim].
void write_codebook(BinaryWriter& out, const Codebook& codebook);
Codebook read_codebook(BinaryReader& in);
void save_codebook(const Codebook& codebook, const std::string& path);
Codebook load_codebook(const std::string& path);

}  // namespace fastdco
