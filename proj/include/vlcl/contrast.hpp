#pragma once

// Momentum-contrast instance discrimination: a FIFO queue of past key
// embeddings used as negatives, and the InfoNCE-style contrastive loss.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "vlcl/tensor.hpp"

namespace vlcl::contrast {

enum class Reduction { sum, mean };

struct ContrastConfig {
    double temperature = 0.07;
    std::size_t queue_capacity = 1024;
    // When false the denominator holds the queue negatives only.
    bool include_positive_in_denominator = true;
    Reduction reduction = Reduction::sum;

    void validate() const;
};

Reduction parse_reduction(std::string_view name);
std::string_view reduction_name(Reduction r);

/// Fixed-capacity FIFO of unit-norm key rows. Enqueueing beyond capacity
/// evicts the oldest rows. Stored rows are plain values with no graph.
class NegativeQueue {
public:
    NegativeQueue() = default;
    NegativeQueue(std::size_t capacity, std::size_t dim);

    std::size_t capacity() const { return capacity_; }
    std::size_t dim() const { return dim_; }
    std::size_t fill() const { return fill_; }
    std::size_t head() const { return head_; }
    bool empty() const { return fill_ == 0; }

    /// Appends the rows of `keys` (batch x dim) in order. Throws
    /// std::invalid_argument when batch > capacity or a row is not unit norm.
    void enqueue(const ag::Tensor& keys);

    /// fill x dim constant tensor, oldest row first.
    ag::Tensor snapshot() const;
    /// Row `i` of the FIFO order (0 = oldest).
    std::span<const double> row(std::size_t i) const;

    /// Raw ring storage, for checkpointing.
    const std::vector<double>& buffer() const { return buffer_; }
    static NegativeQueue restore(std::size_t capacity, std::size_t dim, std::vector<double> buffer,
                                 std::size_t head, std::size_t fill);

private:
    std::size_t capacity_ = 0;
    std::size_t dim_ = 0;
    std::size_t head_ = 0;  // next write slot
    std::size_t fill_ = 0;
    std::vector<double> buffer_;
};

/// Per-sample cross entropy over [q.k+, q.queue...] / temperature with the
/// positive at index 0, reduced over the batch (sum by default). Gradient
/// flows to the inputs that carry a graph; queue contents never receive one.
/// With an empty queue the loss is 0 and a warning is logged once.
ag::Tensor contrastive_loss(const ag::Tensor& q_emb, const ag::Tensor& k_emb,
                            const NegativeQueue& queue, const ContrastConfig& cfg);

}  // namespace vlcl::contrast
