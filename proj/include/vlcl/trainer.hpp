#pragma once

// Two-stage training.
//
// Stage one updates the encoder on L_meta + beta * L_con while keeping the
// graph of the update, so the new parameters remain a function of the view
// module parameters gamma. Stage two re-evaluates the meta loss on the same
// episodes at the new parameters and moves gamma along its gradient.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "vlcl/autoview.hpp"
#include "vlcl/checkpoint.hpp"
#include "vlcl/contrast.hpp"
#include "vlcl/datasets.hpp"
#include "vlcl/encoder.hpp"
#include "vlcl/params.hpp"
#include "vlcl/protohead.hpp"
#include "vlcl/tensor.hpp"

namespace vlcl::trainer {

/// Everything that defines the network functions.
struct ModelConfig {
    encoder::EncoderConfig encoder;
    autoview::LocaliserConfig views;
    autoview::ViewMode view_mode = autoview::ViewMode::learned;
    autoview::AugmentConfig augment;
    contrast::ContrastConfig contrast;
    protohead::SimilarityMetric similarity;

    void validate() const;
};

struct TrainConfig {
    double beta = 2.0;
    double lr = 0.1;
    // epoch -> learning rate from that epoch on
    std::map<std::size_t, double> milestones{{20, 0.01}, {40, 0.001}};
    double eta = 1e-5;
    double epsilon = 0.999;
    double momentum = 0.9;
    bool nesterov = true;
    double weight_decay = 5e-4;
    double clip_norm = 10.0;  // 0 disables clipping
    // Differentiate stage two through the momentum step instead of plain SGD.
    bool differentiate_momentum = false;
    std::size_t epochs = 60;
    std::size_t iterations_per_epoch = 200;
    std::size_t tasks_per_batch = 1;
    std::size_t n_way = 5;
    std::size_t k_shot = 1;
    std::size_t queries_per_class = 4;
    std::uint64_t seed = 1;

    void validate() const;
};

/// Piecewise-constant learning rate; a milestone at epoch e applies from e on.
double lr_schedule(std::size_t epoch, const TrainConfig& cfg);

struct TrainState {
    encoder::EncoderState encoders;
    ParamSet gamma1;
    ParamSet gamma2;
    ParamSet velocity;  // momentum buffer, same layout as theta
    contrast::NegativeQueue queue;
    std::size_t iteration = 0;
    std::size_t epoch = 0;
    std::mt19937_64 episode_rng;
    std::mt19937_64 augment_rng;
};

/// Fresh state: encoders and view modules from `cfg.seed`, empty queue.
TrainState init_state(const ModelConfig& model, const TrainConfig& cfg);

struct LossParts {
    ag::Tensor total;
    ag::Tensor meta;
    ag::Tensor con;
    ag::Tensor keys;  // detached key embeddings of this step
};

/// Meta loss of an episode at `theta` (support and query images unwarped).
ag::Tensor episode_meta_loss(const ModelConfig& model, const ParamSet& theta, const datasets::Episode& ep);

/// L_meta + beta * L_con for one episode. The contrastive term uses the view
/// pair of all support and query images; keys come from omega (no graph to
/// omega, but a graph to gamma2 through the second view).
LossParts total_loss(const ModelConfig& model, double beta, const ParamSet& theta, const ParamSet& omega,
                     const ParamSet& gamma1, const ParamSet& gamma2, const contrast::NegativeQueue& queue,
                     const datasets::Episode& ep, std::mt19937_64& augment_rng);

/// Stage one result. `theta_next` holds the new parameter values and, while
/// `retained` is set, the graph connecting them to gamma1 and gamma2.
struct InnerResult {
    ParamSet theta_next;
    ParamSet gamma1;  // leaves the graph was built from
    ParamSet gamma2;
    double meta_loss = 0.0;
    double con_loss = 0.0;
    double total_loss = 0.0;
    double grad_norm = 0.0;
    bool clipped = false;
    bool retained = false;
};

/// Stage one on a batch of episodes (losses averaged over episodes): updates
/// theta (momentum, weight decay, clipping on the actual values), omega and the
/// queue in `state`, and returns the retained update graph.
InnerResult inner_update(const ModelConfig& model, const TrainConfig& cfg, TrainState& state,
                         const std::vector<datasets::Episode>& episodes, double lr);

struct OuterResult {
    double meta_loss = 0.0;  // at the updated theta
    double gamma_grad_norm = 0.0;
};

/// Stage two: gamma <- gamma - eta * grad_gamma L_meta(theta_next(gamma)) on
/// the same episodes. Consumes the retained graph; throws std::logic_error
/// when `inner` holds none.
OuterResult outer_update(const ModelConfig& model, const TrainConfig& cfg, TrainState& state,
                         InnerResult& inner, const std::vector<datasets::Episode>& episodes);

struct StepRecord {
    std::size_t iteration = 0;
    std::size_t epoch = 0;
    double meta_loss = 0.0;
    double con_loss = 0.0;
    double total_loss = 0.0;
    double gamma_grad_norm = 0.0;
    double lr = 0.0;
    std::size_t queue_fill = 0;
};

/// Samples tasks_per_batch episodes, runs both stages and advances the
/// iteration counter.
StepRecord train_step(const ModelConfig& model, const TrainConfig& cfg, TrainState& state,
                      const datasets::Dataset& data);

struct TrainOptions {
    std::optional<std::filesystem::path> out_dir;  // metrics.csv and checkpoints/
    std::string config_text;                       // stored in checkpoints
    std::optional<std::filesystem::path> resume_from;
    std::function<void(const StepRecord&)> on_step;
};

struct TrainResult {
    TrainState state;
    std::vector<StepRecord> log;
};

TrainResult train(const ModelConfig& model, const TrainConfig& cfg, const datasets::Dataset& data,
                  const TrainOptions& options = {});

/// Header line and row formatting of the metric log.
std::string metrics_header();
std::string metrics_row(const StepRecord& r);

checkpoint::Archive save_state(const TrainState& state, const std::string& config_text);
TrainState load_state(const checkpoint::Archive& archive, const ModelConfig& model, const TrainConfig& cfg);

}  // namespace vlcl::trainer
