#include "vlcl/encoder.hpp"

#include <spdlog/spdlog.h>

#include <string>

#include "vlcl/error.hpp"
#include "vlcl/layers.hpp"
#include "vlcl/ops.hpp"

namespace vlcl::encoder {

using ag::Tensor;

void EncoderConfig::validate() const {
    if (conv_channels.empty()) throw ConfigError("encoder.conv_channels must not be empty");
    for (auto c : conv_channels)
        if (c == 0) throw ConfigError("encoder.conv_channels entries must be positive");
    if (feature_dim == 0) throw ConfigError("encoder.feature_dim must be positive");
    if (proj_dim == 0 || proj_hidden == 0) throw ConfigError("encoder projection widths must be positive");
    if (image_channels == 0) throw ConfigError("encoder.image_channels must be positive");
    if (feature_dim != conv_channels.back()) {
        throw ConfigError("encoder.feature_dim (" + std::to_string(feature_dim) +
                          ") must equal the last conv block width (" +
                          std::to_string(conv_channels.back()) + ")");
    }
    const std::size_t factor = std::size_t{1} << conv_channels.size();
    if (image_size == 0 || image_size % factor != 0) {
        throw ConfigError("encoder.image_size " + std::to_string(image_size) +
                          " must be a positive multiple of " + std::to_string(factor) + " for " +
                          std::to_string(conv_channels.size()) + " pooling blocks");
    }
}

ParamSet init_parameters(const EncoderConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    ParamSet p;
    std::size_t c_in = cfg.image_channels;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        const std::size_t c_out = cfg.conv_channels[i];
        const std::string prefix = "enc.conv" + std::to_string(i);
        p.add(prefix + ".w", he_normal({9 * c_in, c_out}, 9 * c_in, rng));
        p.add(prefix + ".b", Tensor::zeros({c_out}));
        c_in = c_out;
    }
    p.add("head.fc1.w", he_normal({cfg.feature_dim, cfg.proj_hidden}, cfg.feature_dim, rng));
    p.add("head.fc1.b", Tensor::zeros({cfg.proj_hidden}));
    p.add("head.fc2.w", he_normal({cfg.proj_hidden, cfg.proj_dim}, cfg.proj_hidden, rng));
    p.add("head.fc2.b", Tensor::zeros({cfg.proj_dim}));
    return p;
}

EncoderState init_encoders(const EncoderConfig& cfg, std::mt19937_64& rng) {
    ParamSet theta = init_parameters(cfg, rng);
    ParamSet omega = theta.detached();
    return {std::move(theta), std::move(omega)};
}

Tensor encode(const EncoderConfig& cfg, const ParamSet& params, const Tensor& images) {
    if (images.rank() != 4 || images.dim(1) != cfg.image_size || images.dim(2) != cfg.image_size ||
        images.dim(3) != cfg.image_channels) {
        throw std::invalid_argument("encode: expected batch x " + std::to_string(cfg.image_size) +
                                    " x " + std::to_string(cfg.image_size) + " x " +
                                    std::to_string(cfg.image_channels) + " images, got " +
                                    ag::to_string(images.shape()));
    }
    Tensor x = images;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        const std::string prefix = "enc.conv" + std::to_string(i);
        x = layers::conv3x3(x, params.at(prefix + ".w"), params.at(prefix + ".b"));
        x = ag::relu(layers::sample_norm(x));
        x = ag::avg_pool2(x);
    }
    return layers::global_avg_pool(x);
}

Tensor project(const EncoderConfig& cfg, const ParamSet& params, const Tensor& features) {
    if (features.rank() != 2 || features.dim(1) != cfg.feature_dim) {
        throw std::invalid_argument("project: expected batch x " + std::to_string(cfg.feature_dim) +
                                    " features, got " + ag::to_string(features.shape()));
    }
    Tensor h = ag::relu(layers::linear(features, params.at("head.fc1.w"), params.at("head.fc1.b")));
    Tensor z = layers::linear(h, params.at("head.fc2.w"), params.at("head.fc2.b"));
    const auto v = z.values();
    for (std::size_t r = 0; r < z.dim(0); ++r) {
        double sq = 0.0;
        for (std::size_t c = 0; c < z.dim(1); ++c) sq += v[r * z.dim(1) + c] * v[r * z.dim(1) + c];
        if (sq < 1e-24) {
            spdlog::warn("project: row {} has (near) zero norm before normalization", r);
            break;
        }
    }
    return layers::l2_normalize_rows(z, 1e-12);
}

ParamSet momentum_mix(const ParamSet& omega, const ParamSet& theta, double epsilon) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) {
        throw ConfigError("momentum coefficient must lie in [0, 1], got " + std::to_string(epsilon));
    }
    if (omega.names() != theta.names()) {
        throw std::invalid_argument("momentum update: omega and theta layouts differ");
    }
    std::vector<Tensor> mixed;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const auto t = theta[i].values();
        const auto o = omega[i].values();
        // Plain loop (no fused multiply-add) so the result is the literal
        // two-product sum for every kernel variant.
        std::vector<double> w(o.size());
        for (std::size_t j = 0; j < w.size(); ++j) w[j] = epsilon * o[j] + (1.0 - epsilon) * t[j];
        mixed.push_back(Tensor::constant(theta[i].shape(), std::move(w)));
    }
    return omega.with_tensors(std::move(mixed));
}

EncoderState momentum_update(const EncoderState& state, double epsilon) {
    return {state.theta, momentum_mix(state.omega, state.theta, epsilon)};
}

}  // namespace vlcl::encoder
