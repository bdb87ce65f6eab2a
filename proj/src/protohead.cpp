#include "vlcl/protohead.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "vlcl/error.hpp"
#include "vlcl/layers.hpp"
#include "vlcl/ops.hpp"

namespace vlcl::protohead {

using namespace vlcl::ag;

namespace {
thread_local std::size_t g_meta_loss_calls = 0;
}

void SimilarityMetric::validate() const {
    if (!(scale > 0.0)) throw ConfigError("similarity scale must be positive");
}

SimilarityKind parse_similarity(std::string_view name) {
    if (name == "neg_sq_euclidean") return SimilarityKind::neg_sq_euclidean;
    if (name == "cosine") return SimilarityKind::cosine;
    throw ConfigError("unknown similarity '" + std::string(name) + "'");
}

std::string_view similarity_name(SimilarityKind kind) {
    return kind == SimilarityKind::cosine ? "cosine" : "neg_sq_euclidean";
}

Prototypes compute_prototypes(const Tensor& support_features, std::span<const int> support_labels,
                              std::size_t n_way) {
    const std::size_t n = support_features.dim(0);
    if (support_labels.size() != n) {
        throw std::invalid_argument("compute_prototypes: " + std::to_string(n) + " features but " +
                                    std::to_string(support_labels.size()) + " labels");
    }
    std::vector<std::size_t> counts(n_way, 0);
    for (int y : support_labels) {
        if (y < 0 || static_cast<std::size_t>(y) >= n_way) {
            throw std::invalid_argument("compute_prototypes: label " + std::to_string(y) +
                                        " outside [0, " + std::to_string(n_way) + ")");
        }
        ++counts[y];
    }
    const std::size_t k = n_way ? counts[0] : 0;
    for (std::size_t i = 0; i < n_way; ++i) {
        if (counts[i] != k || k == 0) {
            throw std::invalid_argument("compute_prototypes: class " + std::to_string(i) + " has " +
                                        std::to_string(counts[i]) + " support features, expected " +
                                        std::to_string(k));
        }
    }
    // Averaging matrix: n_way x n with 1/K at (label, column).
    std::vector<double> avg(n_way * n, 0.0);
    for (std::size_t j = 0; j < n; ++j) avg[support_labels[j] * n + j] = 1.0 / static_cast<double>(k);
    return {matmul(Tensor::constant({n_way, n}, std::move(avg)), support_features), n_way};
}

Tensor similarity(const Tensor& query_features, const Prototypes& protos, const SimilarityMetric& sim) {
    const Tensor& q = query_features;
    const Tensor& h = protos.vectors;
    if (q.rank() != 2 || h.rank() != 2 || q.dim(1) != h.dim(1)) {
        throw std::invalid_argument("similarity: feature widths differ " + to_string(q.shape()) +
                                    " vs " + to_string(h.shape()));
    }
    const std::size_t m = q.dim(0), n = h.dim(0);
    Tensor s;
    if (sim.kind == SimilarityKind::cosine) {
        s = matmul(layers::l2_normalize_rows(q), layers::l2_normalize_rows(h), false, true);
    } else {
        // -(|q|^2 + |h|^2 - 2 q.h)
        const Tensor qq = expand_cols(row_sum(square(q)), n);
        const Tensor hh = expand_rows(row_sum(square(h)), m);
        s = sub(scale(matmul(q, h, false, true), 2.0), add(qq, hh));
    }
    return sim.scale == 1.0 ? s : scale(s, sim.scale);
}

Tensor meta_loss(const Tensor& query_features, std::span<const int> query_labels,
                 const Prototypes& protos, const SimilarityMetric& sim) {
    ++g_meta_loss_calls;
    for (double v : query_features.values())
        if (!std::isfinite(v)) throw NumericalError("meta_loss: non-finite query feature");
    for (double v : protos.vectors.values())
        if (!std::isfinite(v)) throw NumericalError("meta_loss: non-finite prototype");
    const std::size_t m = query_features.dim(0), n = protos.n_way;
    if (query_labels.size() != m) {
        throw std::invalid_argument("meta_loss: " + std::to_string(m) + " queries but " +
                                    std::to_string(query_labels.size()) + " labels");
    }
    std::vector<double> onehot(m * n, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        const int y = query_labels[i];
        if (y < 0 || static_cast<std::size_t>(y) >= n) {
            throw std::invalid_argument("meta_loss: label " + std::to_string(y) + " outside [0, " +
                                        std::to_string(n) + ")");
        }
        onehot[i * n + y] = 1.0;
    }
    const Tensor logits = similarity(query_features, protos, sim);
    const Tensor picked = row_sum(mul(logits, Tensor::constant({m, n}, std::move(onehot))));
    return scale(sum(sub(layers::logsumexp_rows(logits), picked)), 1.0 / static_cast<double>(m));
}

Classification classify(const Tensor& query_features, const Prototypes& protos,
                        const SimilarityMetric& sim) {
    NoGradGuard no_grad;
    const Tensor s = similarity(query_features, protos, sim);
    const std::size_t m = s.dim(0), n = s.dim(1);
    Classification out;
    out.scores.assign(s.values().begin(), s.values().end());
    out.predicted.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < n; ++j)
            if (out.scores[i * n + j] > out.scores[i * n + best]) best = j;
        out.predicted[i] = static_cast<int>(best);
    }
    return out;
}

std::size_t meta_loss_call_count() { return g_meta_loss_calls; }

}  // namespace vlcl::protohead
