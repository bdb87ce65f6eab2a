#pragma once

// Reference implementations written with plain loops (or, for the standalone
// prototypical network, directly against the ops), shared by the unit tests
// and the acceptance checks.

#include <cmath>
#include <random>
#include <vector>

#include "vlcl/datasets.hpp"
#include "vlcl/encoder.hpp"
#include "vlcl/ops.hpp"
#include "vlcl/trainer.hpp"

namespace vlcl::oracles {

using Matrix = std::vector<std::vector<double>>;

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::mt19937_64& rng, bool unit_rows = false) {
    std::normal_distribution<double> n(0.0, 1.0);
    Matrix m(rows, std::vector<double>(cols));
    for (auto& r : m) {
        double sq = 0.0;
        for (auto& v : r) {
            v = n(rng);
            sq += v * v;
        }
        if (unit_rows)
            for (auto& v : r) v /= std::sqrt(sq);
    }
    return m;
}

inline ag::Tensor to_tensor(const Matrix& m) {
    std::vector<double> flat;
    for (const auto& r : m) flat.insert(flat.end(), r.begin(), r.end());
    return ag::Tensor::constant({m.size(), m.front().size()}, std::move(flat));
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s;
}

/// -1/|Q| sum_q log( exp(-s d(q, c_y)) / sum_n exp(-s d(q, c_n)) ) with class
/// means c_n of the support rows.
inline double meta_loss(const Matrix& support, const std::vector<int>& s_labels, const Matrix& query,
                        const std::vector<int>& q_labels, std::size_t n_way, double scale = 1.0) {
    const std::size_t dim = support.front().size();
    Matrix protos(n_way, std::vector<double>(dim, 0.0));
    std::vector<double> count(n_way, 0.0);
    for (std::size_t i = 0; i < support.size(); ++i) {
        for (std::size_t d = 0; d < dim; ++d) protos[s_labels[i]][d] += support[i][d];
        count[s_labels[i]] += 1.0;
    }
    for (std::size_t c = 0; c < n_way; ++c)
        for (auto& v : protos[c]) v /= count[c];
    double total = 0.0;
    for (std::size_t q = 0; q < query.size(); ++q) {
        double denom = 0.0;
        for (std::size_t c = 0; c < n_way; ++c) denom += std::exp(-scale * sq_dist(query[q], protos[c]));
        const double p = std::exp(-scale * sq_dist(query[q], protos[q_labels[q]])) / denom;
        total += -std::log(p);
    }
    return total / static_cast<double>(query.size());
}

/// sum_i -log( exp(q_i.k_i / t) / (exp(q_i.k_i / t) + sum_j exp(q_i.n_j / t)) ),
/// optionally without the positive in the denominator and averaged over i.
inline double contrastive_loss(const Matrix& q, const Matrix& k, const Matrix& negatives, double t,
                               bool with_positive = true, bool mean = false) {
    double total = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        const double pos = std::exp(dot(q[i], k[i]) / t);
        double denom = with_positive ? pos : 0.0;
        for (const auto& n : negatives) denom += std::exp(dot(q[i], n) / t);
        total += -std::log(pos / denom);
    }
    return mean ? total / static_cast<double>(q.size()) : total;
}

/// The trainer's seeding contract: seed_seq{low word, high word, salt}.
inline std::mt19937_64 seeded(std::uint64_t seed, std::uint32_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), salt};
    return std::mt19937_64(seq);
}

/// Prototypical network loss on one episode: class means through an averaging
/// matrix, negative squared distances, log-softmax. Fills `grads`.
inline double pn_loss(const encoder::EncoderConfig& enc, const ParamSet& theta, const datasets::Episode& ep,
                      std::vector<ag::Tensor>& grads) {
    using ag::Tensor;
    const ParamSet p = theta.as_parameters();
    const std::size_t ns = ep.support_labels.size(), nq = ep.query_labels.size(), n = ep.n_way();
    const Tensor fs = encoder::encode(enc, p, ep.support_images);
    const Tensor fq = encoder::encode(enc, p, ep.query_images);
    std::vector<double> avg(n * ns, 0.0);
    std::vector<double> counts(n, 0.0);
    for (int y : ep.support_labels) counts[y] += 1.0;
    for (std::size_t i = 0; i < ns; ++i) avg[ep.support_labels[i] * ns + i] = 1.0 / counts[ep.support_labels[i]];
    const Tensor protos = ag::matmul(Tensor::constant({n, ns}, avg), fs);
    const Tensor qq = ag::expand_cols(ag::row_sum(ag::square(fq)), n);
    const Tensor pp = ag::expand_rows(ag::row_sum(ag::square(protos)), nq);
    const Tensor logits = ag::sub(ag::scale(ag::matmul(fq, protos, false, true), 2.0), ag::add(qq, pp));
    std::vector<double> onehot(nq * n, 0.0);
    for (std::size_t i = 0; i < nq; ++i) onehot[i * n + ep.query_labels[i]] = 1.0;
    const Tensor log_z = ag::log(ag::row_sum(ag::exp(logits)));
    const Tensor picked = ag::row_sum(ag::mul(logits, Tensor::constant({nq, n}, onehot)));
    const Tensor loss = ag::mean(ag::sub(log_z, picked));
    grads = ag::grad(loss, p.tensors());
    return loss.item();
}

struct PnTrace {
    std::vector<double> losses;
    ParamSet theta;
};

/// Standalone prototypical-network training with the trainer's optimizer
/// (clipped gradient, weight decay, heavy-ball or Nesterov momentum) and the
/// same initialization and episode streams.
inline PnTrace train_pn(const trainer::ModelConfig& model, const trainer::TrainConfig& cfg,
                        const datasets::Dataset& data, std::size_t iterations) {
    auto init_rng = seeded(cfg.seed, 0);
    PnTrace out;
    out.theta = encoder::init_encoders(model.encoder, init_rng).theta;
    auto ep_rng = seeded(cfg.seed, 1);
    std::vector<double> velocity(out.theta.total_numel(), 0.0);
    for (std::size_t it = 0; it < iterations; ++it) {
        const double lr = trainer::lr_schedule(it / cfg.iterations_per_epoch, cfg);
        const auto ep = datasets::sample_episode(data, cfg.n_way, cfg.k_shot, cfg.queries_per_class, ep_rng);
        std::vector<ag::Tensor> grads;
        out.losses.push_back(pn_loss(model.encoder, out.theta, ep, grads));
        std::vector<double> g;
        for (const auto& t : grads) g.insert(g.end(), t.values().begin(), t.values().end());
        double norm = 0.0;
        for (double v : g) norm += v * v;
        norm = std::sqrt(norm);
        const double clip = cfg.clip_norm > 0.0 && norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;
        auto w = out.theta.flatten();
        for (std::size_t j = 0; j < w.size(); ++j) {
            const double d = clip * g[j] + cfg.weight_decay * w[j];
            velocity[j] = cfg.momentum * velocity[j] + d;
            w[j] -= lr * (cfg.nesterov ? d + cfg.momentum * velocity[j] : velocity[j]);
        }
        out.theta = out.theta.unflatten(w);
    }
    return out;
}

}  // namespace vlcl::oracles
