#pragma once

// Prototype aggregation, the prototypical meta loss and nearest-prototype
// classification.

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

#include "vlcl/tensor.hpp"

namespace vlcl::protohead {

enum class SimilarityKind { neg_sq_euclidean, cosine };

struct SimilarityMetric {
    SimilarityKind kind = SimilarityKind::neg_sq_euclidean;
    double scale = 1.0;

    void validate() const;
};

SimilarityKind parse_similarity(std::string_view name);
std::string_view similarity_name(SimilarityKind kind);

/// Row i is the mean of the support features labelled i.
struct Prototypes {
    ag::Tensor vectors;  // n_way x feature_dim
    std::size_t n_way = 0;
};

/// Throws std::invalid_argument unless every label in [0, n_way) has the same
/// number of support rows.
Prototypes compute_prototypes(const ag::Tensor& support_features, std::span<const int> support_labels,
                              std::size_t n_way);

/// queries x n_way similarity matrix.
ag::Tensor similarity(const ag::Tensor& query_features, const Prototypes& protos,
                      const SimilarityMetric& sim);

/// Mean cross entropy of softmax(similarity) against the query labels.
ag::Tensor meta_loss(const ag::Tensor& query_features, std::span<const int> query_labels,
                     const Prototypes& protos, const SimilarityMetric& sim);

struct Classification {
    std::vector<int> predicted;
    std::vector<double> scores;  // queries x n_way, row-major
};

/// Argmax of similarity; ties go to the lowest class index.
Classification classify(const ag::Tensor& query_features, const Prototypes& protos,
                        const SimilarityMetric& sim);

/// Number of meta_loss evaluations made by this thread so far.
std::size_t meta_loss_call_count();

}  // namespace vlcl::protohead
