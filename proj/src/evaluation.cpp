#include "vlcl/evaluation.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "vlcl/encoder.hpp"
#include "vlcl/error.hpp"
#include "vlcl/ops.hpp"
#include "vlcl/protohead.hpp"

namespace vlcl::evaluation {

using ag::Tensor;

namespace {

Tensor gather_rows(const Tensor& features, std::span<const std::size_t> rows) {
    const std::size_t dim = features.dim(1);
    const auto v = features.values();
    std::vector<double> out(rows.size() * dim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        std::copy_n(v.begin() + rows[i] * dim, dim, out.begin() + i * dim);
    return Tensor::constant({rows.size(), dim}, std::move(out));
}

double episode_accuracy(const Tensor& features, const datasets::Episode& ep, const protohead::SimilarityMetric& sim) {
    const auto protos = protohead::compute_prototypes(gather_rows(features, ep.support_indices), ep.support_labels,
                                                      ep.n_way());
    const auto cls = protohead::classify(gather_rows(features, ep.query_indices), protos, sim);
    std::size_t correct = 0;
    for (std::size_t i = 0; i < cls.predicted.size(); ++i) correct += cls.predicted[i] == ep.query_labels[i];
    return 100.0 * static_cast<double>(correct) / static_cast<double>(cls.predicted.size());
}

EvalReport make_report(std::vector<double> accs, const EvalSettings& s) {
    EvalReport r;
    r.per_episode = std::move(accs);
    r.n_episodes = r.per_episode.size();
    r.mean_accuracy = mean(r.per_episode);
    r.ci95 = ci95(r.per_episode);
    r.n_way = s.n_way;
    r.k_shot = s.k_shot;
    r.queries_per_class = s.queries_per_class;
    return r;
}

// Images of coarse class c relabelled by their fine labels, plus their rows in
// the parent dataset.
struct FineView {
    datasets::Dataset data;
    std::vector<std::size_t> rows;
};

FineView fine_view(const datasets::Dataset& d, int coarse) {
    FineView v;
    std::set<int> fine;
    for (std::size_t i = 0; i < d.size(); ++i) {
        if (d.labels[i] != coarse) continue;
        v.rows.push_back(i);
        fine.insert(d.fine_labels[i]);
    }
    const std::vector<int> ids(fine.begin(), fine.end());
    v.data = d.fine_as_classes().select_classes(ids);
    return v;
}

}  // namespace

double mean(std::span<const double> values) {
    if (values.empty()) return 0.0;
    return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

double ci95(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n < 2) return 0.0;
    const double m = mean(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    return 1.96 * sd / std::sqrt(static_cast<double>(n));
}

Tensor dataset_features(const trainer::ModelConfig& model, const ParamSet& theta, const datasets::Dataset& d,
                        std::size_t chunk) {
    ag::NoGradGuard no_grad;
    const ParamSet frozen = theta.detached();
    std::vector<double> out;
    out.reserve(d.size() * model.encoder.feature_dim);
    std::vector<std::size_t> idx;
    for (std::size_t start = 0; start < d.size(); start += chunk) {
        idx.resize(std::min(chunk, d.size() - start));
        std::iota(idx.begin(), idx.end(), start);
        const Tensor f = encoder::encode(model.encoder, frozen, d.batch(idx));
        out.insert(out.end(), f.values().begin(), f.values().end());
    }
    return Tensor::constant({d.size(), model.encoder.feature_dim}, std::move(out));
}

EvalReport evaluate_features(const Tensor& features, const datasets::Dataset& d, const EvalSettings& s,
                             const protohead::SimilarityMetric& sim) {
    if (s.episodes == 0) throw ConfigError("eval.episodes must be positive");
    std::mt19937_64 rng(s.seed);
    std::vector<double> accs;
    accs.reserve(s.episodes);
    for (std::size_t e = 0; e < s.episodes; ++e) {
        const auto ep = datasets::sample_episode(d, s.n_way, s.k_shot, s.queries_per_class, rng);
        accs.push_back(episode_accuracy(features, ep, sim));
    }
    return make_report(std::move(accs), s);
}

EvalReport evaluate(const trainer::ModelConfig& model, const ParamSet& theta, const datasets::Dataset& d,
                    const EvalSettings& s, const std::vector<std::string>* train_classes) {
    if (train_classes) {
        const std::set<std::string> seen(train_classes->begin(), train_classes->end());
        for (const auto& name : d.class_names) {
            if (seen.count(name)) throw DataError("evaluation class '" + name + "' also appears in the training set");
        }
    }
    return evaluate_features(dataset_features(model, theta, d), d, s, model.similarity);
}

double silhouette(const Tensor& features, std::span<const int> labels) {
    const std::size_t n = features.dim(0), dim = features.dim(1);
    if (labels.size() != n) throw std::invalid_argument("silhouette: label count differs from row count");
    std::map<int, std::size_t> sizes;
    for (int y : labels) ++sizes[y];
    if (sizes.size() < 2) throw std::invalid_argument("silhouette needs at least two clusters");
    const auto v = features.values();
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double sq = 0.0;
            for (std::size_t k = 0; k < dim; ++k) {
                const double diff = v[i * dim + k] - v[j * dim + k];
                sq += diff * diff;
            }
            dist[i * n + j] = dist[j * n + i] = std::sqrt(sq);
        }
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (sizes[labels[i]] == 1) continue;
        std::map<int, double> sums;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sums[labels[j]] += dist[i * n + j];
        const double a = sums[labels[i]] / static_cast<double>(sizes[labels[i]] - 1);
        double b = std::numeric_limits<double>::infinity();
        for (const auto& [y, s] : sums)
            if (y != labels[i]) b = std::min(b, s / static_cast<double>(sizes[y]));
        const double denom = std::max(a, b);
        total += denom > 0.0 ? (b - a) / denom : 0.0;
    }
    return total / static_cast<double>(n);
}

ProbeReport fine_probe(const trainer::ModelConfig& model, const ParamSet& theta, const datasets::Dataset& d,
                       const EvalSettings& s) {
    const Tensor features = dataset_features(model, theta, d);
    ProbeReport out;
    std::vector<FineView> views;
    std::vector<double> sils;
    for (std::size_t c = 0; c < d.num_classes(); ++c) {
        FineView v = fine_view(d, static_cast<int>(c));
        if (v.data.num_classes() < 2) continue;
        sils.push_back(silhouette(gather_rows(features, v.rows), v.data.labels));
        if (v.data.num_classes() >= s.n_way) views.push_back(std::move(v));
    }
    if (sils.empty()) throw DataError("fine probe: no class holds two or more fine labels");
    if (views.empty()) {
        throw DataError("fine probe: no class holds " + std::to_string(s.n_way) + " fine labels");
    }
    out.silhouette = mean(sils);

    std::mt19937_64 rng(s.seed);
    std::vector<double> accs;
    for (std::size_t e = 0; e < s.episodes; ++e) {
        const auto& v = views[std::uniform_int_distribution<std::size_t>(0, views.size() - 1)(rng)];
        const auto ep = datasets::sample_episode(v.data, s.n_way, s.k_shot, s.queries_per_class, rng);
        accs.push_back(episode_accuracy(gather_rows(features, v.rows), ep, model.similarity));
    }
    out.fine = make_report(std::move(accs), s);
    return out;
}

void export_embeddings(const trainer::ModelConfig& model, const ParamSet& theta, const datasets::Dataset& d,
                       const std::filesystem::path& out_path) {
    const Tensor f = dataset_features(model, theta, d);
    if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open '" + out_path.string() + "' for writing");
    const std::size_t dim = f.dim(1);
    for (std::size_t k = 0; k < dim; ++k) out << 'f' << k << ',';
    out << "coarse,fine\n";
    out.precision(10);
    const auto v = f.values();
    for (std::size_t i = 0; i < d.size(); ++i) {
        for (std::size_t k = 0; k < dim; ++k) out << v[i * dim + k] << ',';
        out << d.labels[i] << ',' << d.fine_labels[i] << '\n';
    }
    if (!out) throw std::runtime_error("write to '" + out_path.string() + "' failed");
}

void write_report_csv(const std::filesystem::path& path, const EvalReport& r) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.precision(10);
    out << "n_way,k_shot,queries_per_class,n_episodes,mean_accuracy,ci95\n";
    out << r.n_way << ',' << r.k_shot << ',' << r.queries_per_class << ',' << r.n_episodes << ',' << r.mean_accuracy
        << ',' << r.ci95 << '\n';
    out << "\nepisode,accuracy\n";
    for (std::size_t i = 0; i < r.per_episode.size(); ++i) out << i << ',' << r.per_episode[i] << '\n';
}

std::string format_report(const EvalReport& r) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(2);
    os << r.n_way << "-way " << r.k_shot << "-shot (" << r.queries_per_class << " queries/class, " << r.n_episodes
       << " episodes): " << r.mean_accuracy << " +- " << r.ci95 << " %";
    return os.str();
}

std::vector<SweepRow> beta_sweep(const trainer::ModelConfig& model, const trainer::TrainConfig& base,
                                 std::span<const double> betas, const SweepData& data, const EvalSettings& eval,
                                 const EvalSettings& probe_eval) {
    if (!data.train || !data.test) throw std::invalid_argument("beta_sweep needs train and test datasets");
    std::vector<SweepRow> rows;
    for (double beta : betas) {
        trainer::TrainConfig cfg = base;
        cfg.beta = beta;
        spdlog::info("sweep: training with beta = {}", beta);
        const auto result = trainer::train(model, cfg, *data.train);
        SweepRow row;
        row.beta = beta;
        row.report = evaluate(model, result.state.encoders.theta, *data.test, eval, &data.train->class_names);
        if (data.probe) row.probe = fine_probe(model, result.state.encoders.theta, *data.probe, probe_eval);
        rows.push_back(std::move(row));
    }
    return rows;
}

std::string format_sweep(std::span<const SweepRow> rows) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os << "  beta | accuracy (%)     | fine acc (%) | fine silhouette\n";
    os << "-------+------------------+--------------+----------------\n";
    for (const auto& r : rows) {
        os.precision(2);
        os << std::setw(6) << r.beta << " | " << std::setw(6) << r.report.mean_accuracy << " +- " << std::setw(5)
           << r.report.ci95 << " | " << std::setw(12) << r.probe.fine.mean_accuracy << " | ";
        os.precision(4);
        os << std::setw(14) << r.probe.silhouette << '\n';
    }
    return os.str();
}

void write_sweep_csv(const std::filesystem::path& path, std::span<const SweepRow> rows) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    out.precision(10);
    out << "beta,mean_accuracy,ci95,fine_accuracy,fine_ci95,fine_silhouette\n";
    for (const auto& r : rows)
        out << r.beta << ',' << r.report.mean_accuracy << ',' << r.report.ci95 << ',' << r.probe.fine.mean_accuracy
            << ',' << r.probe.fine.ci95 << ',' << r.probe.silhouette << '\n';
}

}  // namespace vlcl::evaluation
