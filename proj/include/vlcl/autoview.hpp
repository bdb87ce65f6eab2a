#pragma once

// Learnable view generation.
//
// A localisation net maps each image to four numbers (x-scale, y-scale,
// x-translation, y-translation) of a diagonal affine warp in normalized
// coordinates. The warp defines a sampling grid and the view is read off the
// (pre-augmented) image by bilinear sampling, so views are differentiable with
// respect to the localisation parameters.

#include <cstddef>
#include <random>
#include <string_view>
#include <vector>

#include "vlcl/params.hpp"
#include "vlcl/tensor.hpp"

namespace vlcl::autoview {

struct AugmentConfig {
    double brightness = 0.4;
    double contrast = 0.4;
    double saturation = 0.4;
    double hue = 0.1;
    double jitter_prob = 0.8;
    double blur_prob = 0.5;
    std::size_t blur_kernel = 3;
    double blur_sigma_min = 0.1;
    double blur_sigma_max = 2.0;
    double flip_prob = 0.5;
    // false: one augmented copy shared by both view branches.
    bool independent_per_branch = true;

    void validate() const;
    static AugmentConfig disabled();
};

enum class ViewMode {
    learned,      // localisation nets
    random_crop,  // random diagonal warps (crop + resize ablation)
    identity,     // no spatial warp
};

ViewMode parse_view_mode(std::string_view name);
std::string_view view_mode_name(ViewMode mode);

struct LocaliserConfig {
    std::vector<std::size_t> conv_channels{8, 8};
    std::size_t image_size = 16;
    std::size_t image_channels = 3;
    double scale_min = 0.3;
    double scale_max = 1.0;

    void validate() const;
};

/// Colour jitter, Gaussian blur and horizontal flip, drawn independently per
/// image. Output is clipped to [0, 1] and carries no graph.
ag::Tensor pre_augment(const ag::Tensor& images, const AugmentConfig& cfg, std::mt19937_64& rng);

/// Horizontal mirror of a batch of images.
ag::Tensor flip_horizontal(const ag::Tensor& images);

/// Separable Gaussian blur with replicate padding, kernel normalized to sum 1.
ag::Tensor gaussian_blur(const ag::Tensor& images, std::size_t kernel, double sigma);

/// Conv weights fan-in scaled. With `identity_init` the output layer is zero so
/// every image maps to the identity warp.
ParamSet init_localiser(const LocaliserConfig& cfg, std::mt19937_64& rng, bool identity_init = true);

/// Unconstrained localisation output, batch x 4.
ag::Tensor localise_raw(const LocaliserConfig& cfg, const ParamSet& gamma, const ag::Tensor& images);

/// Bounded activations: scale = clamp(scale_max - |raw|, scale_min, scale_max),
/// translation = tanh(raw) * (1 - scale), per axis. Columns (sx, sy, tx, ty).
/// A zero raw vector gives (scale_max, scale_max, 0, 0), the identity warp
/// for the default scale_max of 1.
ag::Tensor bound_affine(const LocaliserConfig& cfg, const ag::Tensor& raw);

/// localise_raw followed by bound_affine.
ag::Tensor localise(const LocaliserConfig& cfg, const ParamSet& gamma, const ag::Tensor& images);

/// Random diagonal warps within the same bounds, batch x 4 constant.
ag::Tensor random_affine(const LocaliserConfig& cfg, std::size_t batch, std::mt19937_64& rng);

/// Identity warps (1, 1, 0, 0), batch x 4 constant.
ag::Tensor identity_affine(std::size_t batch);

/// Bilinear sampling of `images` under per-image diagonal warps, output at the
/// input resolution.
ag::Tensor warp(const ag::Tensor& images, const ag::Tensor& affine);

struct Views {
    ag::Tensor first;
    ag::Tensor second;
    ag::Tensor affine_first;   // batch x 4
    ag::Tensor affine_second;  // batch x 4
    ag::Tensor augmented_first;
    ag::Tensor augmented_second;
};

/// Two views per image. views.first depends on gamma1 only and views.second on
/// gamma2 only.
Views make_views(const LocaliserConfig& cfg, ViewMode mode, const ParamSet& gamma1,
                 const ParamSet& gamma2, const ag::Tensor& images, const AugmentConfig& aug,
                 std::mt19937_64& rng);

}  // namespace vlcl::autoview
