#pragma once

// Main encoder F_theta, its projection head, and the momentum copy.
//
// The encoder is a stack of conv blocks (3x3 conv -> per-sample norm -> ReLU ->
// 2x2 average pool) followed by global average pooling; the feature width is
// the channel count of the last block. The projection head is a two-layer MLP
// whose output rows are L2-normalized.

#include <cstddef>
#include <random>
#include <vector>

#include "vlcl/params.hpp"
#include "vlcl/tensor.hpp"

namespace vlcl::encoder {

struct EncoderConfig {
    std::vector<std::size_t> conv_channels{16, 32, 32, 64};
    std::size_t feature_dim = 64;
    std::size_t proj_hidden = 64;
    std::size_t proj_dim = 32;
    std::size_t image_size = 16;
    std::size_t image_channels = 3;

    /// Throws vlcl::ConfigError when the architecture cannot produce
    /// feature_dim features from image_size inputs.
    void validate() const;
};

/// theta holds the encoder and head parameters; omega mirrors theta's names and
/// shapes and is never a gradient target.
struct EncoderState {
    ParamSet theta;
    ParamSet omega;
};

ParamSet init_parameters(const EncoderConfig& cfg, std::mt19937_64& rng);

/// theta initialized fan-in scaled, omega an exact copy.
EncoderState init_encoders(const EncoderConfig& cfg, std::mt19937_64& rng);

/// images: batch x h x w x c -> batch x feature_dim
ag::Tensor encode(const EncoderConfig& cfg, const ParamSet& params, const ag::Tensor& images);

/// features: batch x feature_dim -> batch x proj_dim, unit rows.
ag::Tensor project(const EncoderConfig& cfg, const ParamSet& params, const ag::Tensor& features);

/// omega' = epsilon * omega + (1 - epsilon) * theta. Throws ConfigError for
/// epsilon outside [0, 1].
EncoderState momentum_update(const EncoderState& state, double epsilon);

/// Same as above for bare parameter sets.
ParamSet momentum_mix(const ParamSet& omega, const ParamSet& theta, double epsilon);

}  // namespace vlcl::encoder
