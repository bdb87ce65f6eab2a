#pragma once

// Meta-test evaluation, clustering probes, embedding export and the beta sweep.

#include <cstddef>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vlcl/datasets.hpp"
#include "vlcl/params.hpp"
#include "vlcl/trainer.hpp"

namespace vlcl::evaluation {

struct EvalSettings {
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t queries_per_class = 16;
    std::size_t episodes = 600;
    std::uint64_t seed = 2024;
};

struct EvalReport {
    double mean_accuracy = 0.0;  // percent
    double ci95 = 0.0;           // percent half-width
    std::size_t n_episodes = 0;
    std::size_t n_way = 0;
    std::size_t k_shot = 0;
    std::size_t queries_per_class = 0;
    std::vector<double> per_episode;  // percent
};

/// 1.96 * sample standard deviation / sqrt(n); 0 for fewer than two values.
double ci95(std::span<const double> values);
double mean(std::span<const double> values);

/// Encoder features of every image in `d`, row i for image i.
ag::Tensor dataset_features(const trainer::ModelConfig& model, const ParamSet& theta, const datasets::Dataset& d,
                            std::size_t chunk = 256);

/// Episodes drawn from `d` and classified against support prototypes with
/// frozen theta. When `train_classes` is given, any class name shared with the
/// evaluation set raises vlcl::DataError.
EvalReport evaluate(const trainer::ModelConfig& model, const ParamSet& theta, const datasets::Dataset& d,
                    const EvalSettings& s, const std::vector<std::string>* train_classes = nullptr);

/// Same protocol on precomputed features (rows aligned with `d`).
EvalReport evaluate_features(const ag::Tensor& features, const datasets::Dataset& d, const EvalSettings& s,
                             const protohead::SimilarityMetric& sim);

/// Mean silhouette coefficient under Euclidean distance. Points in singleton
/// clusters score 0. Needs at least two distinct labels.
double silhouette(const ag::Tensor& features, std::span<const int> labels);

struct ProbeReport {
    double silhouette = 0.0;  // mean over coarse classes of the fine-label silhouette
    EvalReport fine;          // episodes over fine labels within one coarse class
};

/// Fine-grained probe: silhouette of the fine labels inside each coarse class
/// and few-shot episodes whose classes are the fine labels of one randomly
/// drawn coarse class.
ProbeReport fine_probe(const trainer::ModelConfig& model, const ParamSet& theta, const datasets::Dataset& d,
                       const EvalSettings& s);

/// CSV rows "f0..f{D-1},coarse,fine" for every image of `d`.
void export_embeddings(const trainer::ModelConfig& model, const ParamSet& theta, const datasets::Dataset& d,
                       const std::filesystem::path& out_path);

void write_report_csv(const std::filesystem::path& path, const EvalReport& r);
std::string format_report(const EvalReport& r);

struct SweepRow {
    double beta = 0.0;
    EvalReport report;
    ProbeReport probe;
};

struct SweepData {
    const datasets::Dataset* train = nullptr;
    const datasets::Dataset* test = nullptr;   // held-out classes
    const datasets::Dataset* probe = nullptr;  // optional fine-grained probe set
};

/// One full training and evaluation per beta, every run starting from the
/// same seed.
std::vector<SweepRow> beta_sweep(const trainer::ModelConfig& model, const trainer::TrainConfig& base,
                                 std::span<const double> betas, const SweepData& data, const EvalSettings& eval,
                                 const EvalSettings& probe_eval);

std::string format_sweep(std::span<const SweepRow> rows);
void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows);

}  // namespace vlcl::evaluation
