#include "vlcl/contrast.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

#include "vlcl/error.hpp"
#include "vlcl/layers.hpp"
#include "vlcl/ops.hpp"

namespace vlcl::contrast {

using namespace vlcl::ag;

void ContrastConfig::validate() const {
    if (!(temperature > 0.0)) throw ConfigError("contrast.temperature must be positive");
    if (queue_capacity == 0) throw ConfigError("contrast.queue_capacity must be positive");
}

Reduction parse_reduction(std::string_view name) {
    if (name == "sum") return Reduction::sum;
    if (name == "mean") return Reduction::mean;
    throw ConfigError("unknown contrastive reduction '" + std::string(name) + "'");
}

std::string_view reduction_name(Reduction r) { return r == Reduction::mean ? "mean" : "sum"; }

NegativeQueue::NegativeQueue(std::size_t capacity, std::size_t dim)
    : capacity_(capacity), dim_(dim), buffer_(capacity * dim, 0.0) {
    if (capacity == 0 || dim == 0) throw std::invalid_argument("queue capacity and dim must be positive");
}

void NegativeQueue::enqueue(const Tensor& keys) {
    if (keys.rank() != 2 || keys.dim(1) != dim_) {
        throw std::invalid_argument("enqueue: expected batch x " + std::to_string(dim_) +
                                    " keys, got " + to_string(keys.shape()));
    }
    const std::size_t b = keys.dim(0);
    if (b > capacity_) {
        throw std::invalid_argument("enqueue: batch of " + std::to_string(b) +
                                    " keys exceeds queue capacity " + std::to_string(capacity_));
    }
    const auto v = keys.values();
    for (std::size_t r = 0; r < b; ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < dim_; ++c) sq += v[r * dim_ + c] * v[r * dim_ + c];
        if (std::abs(std::sqrt(sq) - 1.0) > 1e-5) {
            throw std::invalid_argument("enqueue: key row " + std::to_string(r) +
                                        " is not unit norm (|k| = " + std::to_string(std::sqrt(sq)) + ")");
        }
    }
    for (std::size_t r = 0; r < b; ++r) {
        std::copy(v.begin() + r * dim_, v.begin() + (r + 1) * dim_, buffer_.begin() + head_ * dim_);
        head_ = (head_ + 1) % capacity_;
    }
    fill_ = std::min(capacity_, fill_ + b);
}

std::span<const double> NegativeQueue::row(std::size_t i) const {
    if (i >= fill_) throw std::out_of_range("queue row " + std::to_string(i) + " >= fill " + std::to_string(fill_));
    const std::size_t oldest = (head_ + capacity_ - fill_) % capacity_;
    const std::size_t slot = (oldest + i) % capacity_;
    return {buffer_.data() + slot * dim_, dim_};
}

Tensor NegativeQueue::snapshot() const {
    std::vector<double> rows(fill_ * dim_);
    for (std::size_t i = 0; i < fill_; ++i) {
        const auto r = row(i);
        std::copy(r.begin(), r.end(), rows.begin() + i * dim_);
    }
    return Tensor::constant({fill_, dim_}, std::move(rows));
}

NegativeQueue NegativeQueue::restore(std::size_t capacity, std::size_t dim, std::vector<double> buffer,
                                     std::size_t head, std::size_t fill) {
    NegativeQueue q(capacity, dim);
    if (buffer.size() != capacity * dim || head >= capacity || fill > capacity) {
        throw std::invalid_argument("queue restore: inconsistent ring state");
    }
    q.buffer_ = std::move(buffer);
    q.head_ = head;
    q.fill_ = fill;
    return q;
}

Tensor contrastive_loss(const Tensor& q_emb, const Tensor& k_emb, const NegativeQueue& queue,
                        const ContrastConfig& cfg) {
    if (q_emb.shape() != k_emb.shape() || q_emb.rank() != 2) {
        throw std::invalid_argument("contrastive_loss: query/key shapes differ " +
                                    to_string(q_emb.shape()) + " vs " + to_string(k_emb.shape()));
    }
    if (!queue.empty() && queue.dim() != q_emb.dim(1)) {
        throw std::invalid_argument("contrastive_loss: queue width " + std::to_string(queue.dim()) +
                                    " differs from embedding width " + std::to_string(q_emb.dim(1)));
    }
    if (queue.empty()) {
        static std::atomic<bool> warned{false};
        if (!warned.exchange(true)) {
            spdlog::warn("contrastive loss evaluated with an empty negative queue; loss is 0");
        }
        return Tensor::scalar(0.0);
    }
    const std::size_t b = q_emb.dim(0);
    const double inv_t = 1.0 / cfg.temperature;
    const Tensor pos = scale(row_sum(mul(q_emb, k_emb)), inv_t);               // b
    const Tensor neg = scale(matmul(q_emb, queue.snapshot(), false, true), inv_t);  // b x fill

    Tensor per_sample;
    if (cfg.include_positive_in_denominator) {
        const std::size_t r = neg.dim(1);
        std::vector<double> shift(b);
        const auto pv = pos.values();
        const auto nv = neg.values();
        for (std::size_t i = 0; i < b; ++i) {
            double m = pv[i];
            for (std::size_t j = 0; j < r; ++j) m = std::max(m, nv[i * r + j]);
            shift[i] = m;
        }
        const Tensor c = Tensor::constant({b}, std::move(shift));
        const Tensor denom = add(exp(sub(pos, c)), row_sum(exp(sub(neg, expand_cols(c, r)))));
        per_sample = sub(add(log(denom), c), pos);
    } else {
        per_sample = sub(layers::logsumexp_rows(neg), pos);
    }
    const Tensor total = sum(per_sample);
    return cfg.reduction == Reduction::mean ? scale(total, 1.0 / static_cast<double>(b)) : total;
}

}  // namespace vlcl::contrast
