#pragma once

#include "fastdco/common.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

namespace testing {

/// Unique path under the system temp directory, removed on destruction.
class TempFile {
public:
    explicit TempFile(const std::string& stem) {
        static int counter = 0;
        path_ = (std::filesystem::temp_directory_path() /
                 ("fastdco_" + stem + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++)))
                    .string();
    }
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
        std::filesystem::remove(path_ + ".dist.fvecs", ec);
    }
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

inline fastdco::RowMatrixXf gaussian(Eigen::Index n, Eigen::Index d, std::uint64_t seed, float scale = 1.0f) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<float> g(0.0f, scale);
    fastdco::RowMatrixXf m(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) m(i, j) = g(rng);
    return m;
}

inline void write_bytes(const std::string& path, const std::string& bytes) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
}

template <typename T>
void append(std::string& buf, T v) {
    buf.append(reinterpret_cast<const char*>(&v), sizeof v);
}

}  // namespace testing
