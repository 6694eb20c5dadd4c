#pragma once

#include <Eigen/Dense>

#include <bit>
#include <cstdint>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace fastdco {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written with native little-endian layout");

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using RowMatrixXf = RowMatrix<float>;
using RowMatrixXd = RowMatrix<double>;
using RowMatrixXi = RowMatrix<std::int32_t>;

/// n x D row-major float matrix; row i is vector i.
using Dataset = RowMatrixXf;

using VectorId = std::int32_t;

enum class ErrorCode {
    io_failure,
    truncated_file,
    dimension_mismatch,
    non_finite_value,
    invalid_argument,
    format_error,
};

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what) : std::runtime_error(what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

inline void require(bool cond, const std::string& what,
                    ErrorCode code = ErrorCode::invalid_argument) {
    if (!cond) throw Error(code, what);
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar squared_l2(const Eigen::MatrixBase<DerivedA>& a,
                                     const Eigen::MatrixBase<DerivedB>& b) {
    return (a - b).squaredNorm();
}

// Little-endian binary record streams used by every on-disk artifact.
class BinaryWriter {
public:
    explicit BinaryWriter(const std::string& path)
        : out_(path, std::ios::binary | std::ios::trunc), path_(path) {
        if (!out_) throw Error(ErrorCode::io_failure, "cannot open for writing: " + path);
    }

    template <typename T>
    void put(T value) {
        static_assert(std::is_trivially_copyable_v<T>);
        out_.write(reinterpret_cast<const char*>(&value), sizeof(T));
        check();
    }

    template <typename T>
    void put_array(std::span<const T> values) {
        static_assert(std::is_trivially_copyable_v<T>);
        out_.write(reinterpret_cast<const char*>(values.data()),
                   static_cast<std::streamsize>(values.size_bytes()));
        check();
    }

    template <typename Derived>
    void put_matrix(const Eigen::DenseBase<Derived>& m) {
        using Scalar = typename Derived::Scalar;
        RowMatrix<Scalar> rm = m;
        put_array(std::span<const Scalar>(rm.data(), static_cast<std::size_t>(rm.size())));
    }

    void close() {
        out_.close();
        if (!out_) throw Error(ErrorCode::io_failure, "failed to close " + path_);
    }

private:
    void check() {
        if (!out_) throw Error(ErrorCode::io_failure, "write failed: " + path_);
    }

    std::ofstream out_;
    std::string path_;
};

class BinaryReader {
public:
    explicit BinaryReader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw Error(ErrorCode::io_failure, "cannot open for reading: " + path);
    }

    template <typename T>
    T get() {
        T value{};
        in_.read(reinterpret_cast<char*>(&value), sizeof(T));
        if (!in_) throw Error(ErrorCode::truncated_file, "unexpected end of file: " + path_);
        return value;
    }

    template <typename T>
    void get_array(std::span<T> out) {
        in_.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
        if (!in_) throw Error(ErrorCode::truncated_file, "unexpected end of file: " + path_);
    }

    template <typename Scalar>
    RowMatrix<Scalar> get_matrix(Eigen::Index rows, Eigen::Index cols) {
        RowMatrix<Scalar> m(rows, cols);
        get_array(std::span<Scalar>(m.data(), static_cast<std::size_t>(m.size())));
        return m;
    }

    template <typename Scalar>
    Vector<Scalar> get_vector(Eigen::Index size) {
        Vector<Scalar> v(size);
        get_array(std::span<Scalar>(v.data(), static_cast<std::size_t>(v.size())));
        return v;
    }

    /// Returns a non-negative int32 count, rejecting corrupt headers.
    std::int32_t get_count(std::int32_t max_value = 1 << 30) {
        auto v = get<std::int32_t>();
        if (v < 0 || v > max_value)
            throw Error(ErrorCode::format_error, "corrupt count field in " + path_);
        return v;
    }

    bool at_eof() { return in_.peek() == std::char_traits<char>::eof(); }

private:
    std::ifstream in_;
    std::string path_;
};

}  // namespace fastdco
