#pragma once

#include "fastdco/index.hpp"
#include "fastdco/learn.hpp"

#include <cstdint>

namespace fastdco {

struct CollectOptions {
    int k = 10;
    int per_query_visits = 50;  // label-1 samples kept per query
    int nprobe = 0;             // 0: max(1, nlist / 16)
    int delta_d = 32;
    std::uint64_t seed = 0;
};

/// Gathers labeled samples for every checkpoint below D (and the quantization
/// features when the index stores codes). tau is the query's exact K-th NN
/// distance; the K NNs are label 0 and label-1 samples are drawn from the
/// candidates an IVF pass visits. `queries` must not overlap evaluation queries.
TrainingSet collect_training(const IvfIndex& index, const Dataset& queries, const CollectOptions& options);

}  // namespace fastdco
