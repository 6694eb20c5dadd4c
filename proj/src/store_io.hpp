#pragma once

#include "fastdco/index.hpp"

#include <queue>

namespace fastdco::detail {

void write_store(BinaryWriter& out, const VectorStore& store);
VectorStore read_store(BinaryReader& in);

void write_tag(BinaryWriter& out, const char (&tag)[5]);
void expect_tag(BinaryReader& in, const char (&tag)[5], const std::string& path);

/// Bounded max-heap of the best `capacity` neighbours.
class ResultQueue {
public:
    explicit ResultQueue(std::size_t capacity) : capacity_(capacity) {}

    bool full() const { return heap_.size() >= capacity_; }
    float threshold() const { return full() ? heap_.top().distance : kQueueNotFull; }
    std::size_t size() const { return heap_.size(); }

    /// Inserts when not full or strictly better than the current worst.
    bool offer(Neighbor n) {
        if (!full()) {
            heap_.push(n);
            return true;
        }
        if (n.distance < heap_.top().distance) {
            heap_.pop();
            heap_.push(n);
            return true;
        }
        return false;
    }

    std::vector<Neighbor> sorted(std::size_t k) {
        std::vector<Neighbor> out;
        while (!heap_.empty()) {
            out.push_back(heap_.top());
            heap_.pop();
        }
        std::sort(out.begin(), out.end());
        if (out.size() > k) out.resize(k);
        return out;
    }

private:
    std::size_t capacity_;
    std::priority_queue<Neighbor> heap_;
};

/// Code pointer for vector i; unpacks into `scratch` when codes are not byte aligned.
inline const std::uint8_t* code_of(const VectorStore& store, Eigen::Index i, PqCode& scratch) {
    if (!store.has_codes()) return nullptr;
    if (store.codes.nbits() == 8)
        return store.codes.bytes().data() + static_cast<std::size_t>(i) * static_cast<std::size_t>(store.codes.num_subspaces());
    scratch = store.codes.get(i);
    return scratch.data();
}

inline float resid_of(const VectorStore& store, Eigen::Index i) {
    return store.has_codes() ? store.code_resid(i) : 0.0f;
}

}  // namespace fastdco::detail
