#include "vlcl/trainer.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "vlcl/error.hpp"
#include "vlcl/ops.hpp"

namespace vlcl::trainer {

using ag::Tensor;

namespace {

std::mt19937_64 stream(std::uint64_t seed, std::uint32_t salt) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), salt};
    return std::mt19937_64(seq);
}

std::string rng_text(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

std::mt19937_64 rng_from_text(const std::string& text) {
    std::istringstream is(text);
    std::mt19937_64 rng;
    is >> rng;
    if (!is) throw std::runtime_error("checkpoint holds a malformed generator state");
    return rng;
}

void require_finite(double v, const char* what) {
    if (!std::isfinite(v)) throw NumericalError(std::string(what) + " is not finite");
}

}  // namespace

void ModelConfig::validate() const {
    encoder.validate();
    views.validate();
    augment.validate();
    contrast.validate();
    similarity.validate();
    if (views.image_size != encoder.image_size || views.image_channels != encoder.image_channels) {
        throw ConfigError("view modules and encoder must share the image size and channel count");
    }
}

void TrainConfig::validate() const {
    if (!(beta >= 0.0)) throw ConfigError("train.beta must be >= 0");
    if (!(lr > 0.0)) throw ConfigError("train.lr must be positive");
    for (const auto& [epoch, rate] : milestones)
        if (!(rate > 0.0)) throw ConfigError("train.milestones rates must be positive (epoch " + std::to_string(epoch) + ")");
    if (!(eta > 0.0)) throw ConfigError("train.eta must be positive");
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ConfigError("train.epsilon must lie in [0, 1]");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("train.momentum must lie in [0, 1)");
    if (!(weight_decay >= 0.0)) throw ConfigError("train.weight_decay must be >= 0");
    if (!(clip_norm >= 0.0)) throw ConfigError("train.clip_norm must be >= 0");
    if (tasks_per_batch == 0 || iterations_per_epoch == 0) throw ConfigError("train iteration counts must be positive");
    if (n_way < 2 || k_shot == 0 || queries_per_class == 0) throw ConfigError("train episodes need n_way >= 2, k_shot >= 1, queries >= 1");
}

double lr_schedule(std::size_t epoch, const TrainConfig& cfg) {
    double lr = cfg.lr;
    for (const auto& [start, rate] : cfg.milestones) {
        if (epoch >= start) lr = rate;
    }
    return lr;
}

TrainState init_state(const ModelConfig& model, const TrainConfig& cfg) {
    model.validate();
    cfg.validate();
    TrainState s;
    auto init_rng = stream(cfg.seed, 0);
    s.encoders = encoder::init_encoders(model.encoder, init_rng);
    s.gamma1 = autoview::init_localiser(model.views, init_rng, true);
    s.gamma2 = autoview::init_localiser(model.views, init_rng, true);
    std::vector<Tensor> zeros;
    for (const auto& t : s.encoders.theta.tensors()) zeros.push_back(Tensor::zeros(t.shape()));
    s.velocity = s.encoders.theta.with_tensors(std::move(zeros));
    s.queue = contrast::NegativeQueue(model.contrast.queue_capacity, model.encoder.proj_dim);
    s.episode_rng = stream(cfg.seed, 1);
    s.augment_rng = stream(cfg.seed, 2);
    return s;
}

Tensor episode_meta_loss(const ModelConfig& model, const ParamSet& theta, const datasets::Episode& ep) {
    const std::size_t ns = ep.support_images.dim(0), nq = ep.query_images.dim(0);
    const Tensor feats = encoder::encode(model.encoder, theta, ag::concat_rows({ep.support_images, ep.query_images}));
    const auto protos =
        protohead::compute_prototypes(ag::slice_rows(feats, 0, ns), ep.support_labels, ep.n_way());
    return protohead::meta_loss(ag::slice_rows(feats, ns, nq), ep.query_labels, protos, model.similarity);
}

LossParts total_loss(const ModelConfig& model, double beta, const ParamSet& theta, const ParamSet& omega,
                     const ParamSet& gamma1, const ParamSet& gamma2, const contrast::NegativeQueue& queue,
                     const datasets::Episode& ep, std::mt19937_64& augment_rng) {
    LossParts parts;
    parts.meta = episode_meta_loss(model, theta, ep);
    const Tensor images = ag::concat_rows({ep.support_images, ep.query_images});
    auto contrastive = [&] {
        const auto views =
            autoview::make_views(model.views, model.view_mode, gamma1, gamma2, images, model.augment, augment_rng);
        const Tensor q = encoder::project(model.encoder, theta, encoder::encode(model.encoder, theta, views.first));
        const Tensor k = encoder::project(model.encoder, omega, encoder::encode(model.encoder, omega, views.second));
        parts.keys = k.detach();
        return contrast::contrastive_loss(q, k, queue, model.contrast);
    };
    if (beta == 0.0) {
        // Logged only; keeps the augmentation stream and queue identical to
        // runs with beta > 0.
        ag::NoGradGuard no_grad;
        parts.con = contrastive();
        parts.total = parts.meta;
    } else {
        parts.con = contrastive();
        parts.total = ag::add(parts.meta, ag::scale(parts.con, beta));
    }
    return parts;
}

InnerResult inner_update(const ModelConfig& model, const TrainConfig& cfg, TrainState& state,
                         const std::vector<datasets::Episode>& episodes, double lr) {
    if (episodes.empty()) throw std::invalid_argument("inner_update: no episodes");
    const ParamSet theta = state.encoders.theta.as_parameters();
    const ParamSet gamma1 = state.gamma1.as_parameters();
    const ParamSet gamma2 = state.gamma2.as_parameters();
    const bool keep_graph = cfg.beta > 0.0 && model.view_mode == autoview::ViewMode::learned;

    InnerResult out;
    Tensor total;
    std::vector<Tensor> keys;
    const double inv_tasks = 1.0 / static_cast<double>(episodes.size());
    for (const auto& ep : episodes) {
        LossParts p = total_loss(model, cfg.beta, theta, state.encoders.omega, gamma1, gamma2, state.queue, ep,
                                 state.augment_rng);
        out.meta_loss += p.meta.item() * inv_tasks;
        out.con_loss += p.con.item() * inv_tasks;
        total = total.defined() ? ag::add(total, p.total) : p.total;
        keys.push_back(p.keys);
    }
    if (episodes.size() > 1) total = ag::scale(total, inv_tasks);
    out.total_loss = total.item();
    require_finite(out.meta_loss, "meta loss");
    require_finite(out.con_loss, "contrastive loss");
    require_finite(out.total_loss, "total loss");

    const auto grads = ag::grad(total, theta.tensors(), keep_graph);
    double sq = 0.0;
    for (const auto& g : grads)
        for (double v : g.values()) sq += v * v;
    out.grad_norm = std::sqrt(sq);
    require_finite(out.grad_norm, "encoder gradient norm");
    double clip = 1.0;
    if (cfg.clip_norm > 0.0 && out.grad_norm > cfg.clip_norm) {
        clip = cfg.clip_norm / out.grad_norm;
        out.clipped = true;
        spdlog::info("iteration {}: gradient norm {:.4g} clipped to {:.4g}", state.iteration, out.grad_norm,
                     cfg.clip_norm);
    }

    // Derivative of the actual step with respect to the gradient, used by the
    // surrogate that carries the graph into stage two.
    const double slope = cfg.differentiate_momentum && cfg.nesterov ? 1.0 + cfg.momentum : 1.0;
    std::vector<Tensor> next, velocity, surrogate;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const auto t = theta[i].values();
        const auto g = grads[i].values();
        const auto v_old = state.velocity[i].values();
        std::vector<double> v(t.size()), w(t.size());
        for (std::size_t j = 0; j < t.size(); ++j) {
            const double d = clip * g[j] + cfg.weight_decay * t[j];
            v[j] = cfg.momentum * v_old[j] + d;
            const double step = cfg.nesterov ? d + cfg.momentum * v[j] : v[j];
            w[j] = t[j] - lr * step;
        }
        if (keep_graph) {
            const Tensor base = ag::sub(theta[i], ag::scale(grads[i], lr * clip * slope));
            std::vector<double> correction(t.size());
            const auto b = base.values();
            for (std::size_t j = 0; j < t.size(); ++j) correction[j] = w[j] - b[j];
            surrogate.push_back(ag::add(base, Tensor::constant(theta[i].shape(), std::move(correction))));
        }
        velocity.push_back(Tensor::constant(theta[i].shape(), std::move(v)));
        next.push_back(Tensor::constant(theta[i].shape(), std::move(w)));
    }
    state.velocity = state.velocity.with_tensors(std::move(velocity));
    state.encoders.theta = state.encoders.theta.with_tensors(next);
    state.encoders.omega = encoder::momentum_mix(state.encoders.omega, state.encoders.theta, cfg.epsilon);
    state.queue.enqueue(keys.size() == 1 ? keys.front() : ag::concat_rows(keys));

    out.theta_next = keep_graph ? theta.with_tensors(std::move(surrogate)) : state.encoders.theta;
    out.gamma1 = gamma1;
    out.gamma2 = gamma2;
    out.retained = true;
    return out;
}

OuterResult outer_update(const ModelConfig& model, const TrainConfig& cfg, TrainState& state, InnerResult& inner,
                         const std::vector<datasets::Episode>& episodes) {
    if (!inner.retained) {
        throw std::logic_error("outer_update requires the retained graph of a preceding inner_update");
    }
    Tensor meta;
    for (const auto& ep : episodes) {
        const Tensor m = episode_meta_loss(model, inner.theta_next, ep);
        meta = meta.defined() ? ag::add(meta, m) : m;
    }
    if (episodes.size() > 1) meta = ag::scale(meta, 1.0 / static_cast<double>(episodes.size()));

    std::vector<Tensor> leaves = inner.gamma1.tensors();
    leaves.insert(leaves.end(), inner.gamma2.tensors().begin(), inner.gamma2.tensors().end());
    const auto grads = ag::grad(meta, leaves);

    OuterResult out;
    out.meta_loss = meta.item();
    double sq = 0.0;
    std::vector<Tensor> g1, g2;
    for (std::size_t i = 0; i < leaves.size(); ++i) {
        const auto p = leaves[i].values();
        const auto g = grads[i].values();
        std::vector<double> w(p.size());
        for (std::size_t j = 0; j < p.size(); ++j) {
            sq += g[j] * g[j];
            w[j] = p[j] - cfg.eta * g[j];
        }
        (i < inner.gamma1.size() ? g1 : g2).push_back(Tensor::constant(leaves[i].shape(), std::move(w)));
    }
    out.gamma_grad_norm = std::sqrt(sq);
    require_finite(out.gamma_grad_norm, "view module gradient norm");
    state.gamma1 = state.gamma1.with_tensors(std::move(g1));
    state.gamma2 = state.gamma2.with_tensors(std::move(g2));

    inner.theta_next = inner.theta_next.detached();
    inner.retained = false;
    return out;
}

StepRecord train_step(const ModelConfig& model, const TrainConfig& cfg, TrainState& state,
                      const datasets::Dataset& data) {
    const double lr = lr_schedule(state.epoch, cfg);
    std::vector<datasets::Episode> episodes;
    for (std::size_t t = 0; t < cfg.tasks_per_batch; ++t)
        episodes.push_back(datasets::sample_episode(data, cfg.n_way, cfg.k_shot, cfg.queries_per_class,
                                                    state.episode_rng));
    InnerResult inner = inner_update(model, cfg, state, episodes, lr);
    const OuterResult outer = outer_update(model, cfg, state, inner, episodes);

    StepRecord r;
    r.iteration = state.iteration;
    r.epoch = state.epoch;
    r.meta_loss = inner.meta_loss;
    r.con_loss = inner.con_loss;
    r.total_loss = inner.total_loss;
    r.gamma_grad_norm = outer.gamma_grad_norm;
    r.lr = lr;
    r.queue_fill = state.queue.fill();
    ++state.iteration;
    return r;
}

std::string metrics_header() { return "iteration,epoch,meta_loss,con_loss,total_loss,gamma_grad_norm,lr,queue_fill"; }

std::string metrics_row(const StepRecord& r) {
    std::ostringstream os;
    os.precision(10);
    os << r.iteration << ',' << r.epoch << ',' << r.meta_loss << ',' << r.con_loss << ',' << r.total_loss << ','
       << r.gamma_grad_norm << ',' << r.lr << ',' << r.queue_fill;
    return os.str();
}

checkpoint::Archive save_state(const TrainState& state, const std::string& config_text) {
    checkpoint::Archive a;
    a.put_params("theta", state.encoders.theta);
    a.put_params("omega", state.encoders.omega);
    a.put_params("gamma1", state.gamma1);
    a.put_params("gamma2", state.gamma2);
    a.put_params("velocity", state.velocity);
    const auto& q = state.queue;
    a.put_array("queue/buffer", {q.capacity(), q.dim()}, q.buffer());
    a.put_array("queue/state", {4}, {static_cast<double>(q.capacity()), static_cast<double>(q.dim()),
                                     static_cast<double>(q.head()), static_cast<double>(q.fill())});
    a.put_array("progress", {2}, {static_cast<double>(state.iteration), static_cast<double>(state.epoch)});
    a.put_text("rng/episode", rng_text(state.episode_rng));
    a.put_text("rng/augment", rng_text(state.augment_rng));
    a.put_text("config", config_text);
    return a;
}

TrainState load_state(const checkpoint::Archive& a, const ModelConfig& model, const TrainConfig& cfg) {
    TrainState s = init_state(model, cfg);
    s.encoders.theta = a.params("theta", s.encoders.theta);
    s.encoders.omega = a.params("omega", s.encoders.omega);
    s.gamma1 = a.params("gamma1", s.gamma1);
    s.gamma2 = a.params("gamma2", s.gamma2);
    s.velocity = a.params("velocity", s.velocity);
    const auto& qs = a.array("queue/state").values;
    const auto& buf = a.array("queue/buffer");
    s.queue = contrast::NegativeQueue::restore(static_cast<std::size_t>(qs.at(0)), static_cast<std::size_t>(qs.at(1)),
                                               buf.values, static_cast<std::size_t>(qs.at(2)),
                                               static_cast<std::size_t>(qs.at(3)));
    if (s.queue.dim() != model.encoder.proj_dim) throw std::runtime_error("checkpoint queue width differs from proj_dim");
    const auto& progress = a.array("progress").values;
    s.iteration = static_cast<std::size_t>(progress.at(0));
    s.epoch = static_cast<std::size_t>(progress.at(1));
    s.episode_rng = rng_from_text(a.text("rng/episode"));
    s.augment_rng = rng_from_text(a.text("rng/augment"));
    return s;
}

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const datasets::Dataset& data,
                  const TrainOptions& options) {
    model.validate();
    cfg.validate();
    data.validate();
    if (data.height != model.encoder.image_size || data.width != model.encoder.image_size ||
        data.channels != model.encoder.image_channels) {
        throw ConfigError("dataset images are " + std::to_string(data.height) + "x" + std::to_string(data.width) +
                          "x" + std::to_string(data.channels) + " but the model expects " +
                          std::to_string(model.encoder.image_size) + " pixel squares with " +
                          std::to_string(model.encoder.image_channels) + " channels");
    }
    TrainResult result;
    result.state = options.resume_from ? load_state(checkpoint::Archive::load(*options.resume_from), model, cfg)
                                       : init_state(model, cfg);
    TrainState& state = result.state;

    std::ofstream metrics;
    if (options.out_dir) {
        std::filesystem::create_directories(*options.out_dir / "checkpoints");
        const auto path = *options.out_dir / "metrics.csv";
        const bool append = options.resume_from.has_value() && std::filesystem::exists(path);
        metrics.open(path, append ? std::ios::app : std::ios::trunc);
        if (!metrics) throw std::runtime_error("cannot open '" + path.string() + "'");
        if (!append) metrics << metrics_header() << '\n';
    }

    while (state.epoch < cfg.epochs) {
        while (state.iteration < (state.epoch + 1) * cfg.iterations_per_epoch) {
            const StepRecord r = train_step(model, cfg, state, data);
            if (metrics.is_open()) metrics << metrics_row(r) << '\n';
            if (options.on_step) options.on_step(r);
            result.log.push_back(r);
        }
        ++state.epoch;
        if (options.out_dir) {
            metrics.flush();
            save_state(state, options.config_text)
                .save(*options.out_dir / "checkpoints" / ("epoch_" + std::to_string(state.epoch)));
        }
    }
    return result;
}

}  // namespace vlcl::trainer
