#include "vlcl/autoview.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "vlcl/error.hpp"
#include "vlcl/layers.hpp"
#include "vlcl/ops.hpp"

namespace vlcl::autoview {

using namespace vlcl::ag;

namespace {

void check_prob(const char* name, double p) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string("augment.") + name + " must lie in [0, 1]");
}

void check_images(const char* fn, const Tensor& images) {
    if (images.rank() != 4) {
        throw std::invalid_argument(std::string(fn) + ": expected batch x h x w x c images, got " +
                                    to_string(images.shape()));
    }
}

// In-place colour jitter on one h x w x 3 image.
void jitter_image(double* img, std::size_t npix, double brightness, double contrast,
                  double saturation, double hue_turns) {
    if (brightness != 1.0) {
        for (std::size_t i = 0; i < 3 * npix; ++i) img[i] = std::clamp(img[i] * brightness, 0.0, 1.0);
    }
    auto luma = [](const double* p) { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; };
    if (contrast != 1.0) {
        double mean = 0.0;
        for (std::size_t i = 0; i < npix; ++i) mean += luma(img + 3 * i);
        mean /= static_cast<double>(npix);
        for (std::size_t i = 0; i < 3 * npix; ++i)
            img[i] = std::clamp((img[i] - mean) * contrast + mean, 0.0, 1.0);
    }
    if (saturation != 1.0) {
        for (std::size_t i = 0; i < npix; ++i) {
            double* p = img + 3 * i;
            const double g = luma(p);
            for (int c = 0; c < 3; ++c) p[c] = std::clamp((p[c] - g) * saturation + g, 0.0, 1.0);
        }
    }
    if (hue_turns != 0.0) {
        // Rotation of the chroma plane in YIQ space.
        const double a = 2.0 * std::numbers::pi * hue_turns;
        const double ca = std::cos(a), sa = std::sin(a);
        for (std::size_t i = 0; i < npix; ++i) {
            double* p = img + 3 * i;
            const double y = 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2];
            const double ii = 0.596 * p[0] - 0.274 * p[1] - 0.322 * p[2];
            const double qq = 0.211 * p[0] - 0.523 * p[1] + 0.312 * p[2];
            const double i2 = ca * ii - sa * qq;
            const double q2 = sa * ii + ca * qq;
            p[0] = std::clamp(y + 0.956 * i2 + 0.621 * q2, 0.0, 1.0);
            p[1] = std::clamp(y - 0.272 * i2 - 0.647 * q2, 0.0, 1.0);
            p[2] = std::clamp(y - 1.106 * i2 + 1.703 * q2, 0.0, 1.0);
        }
    }
}

std::vector<double> gaussian_kernel(std::size_t size, double sigma) {
    std::vector<double> k(size);
    const double center = 0.5 * static_cast<double>(size - 1);
    double total = 0.0;
    for (std::size_t i = 0; i < size; ++i) {
        const double d = static_cast<double>(i) - center;
        k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
        total += k[i];
    }
    for (auto& v : k) v /= total;
    return k;
}

// Separable blur of one h x w x c image with replicate padding.
void blur_image(const double* src, double* dst, std::size_t h, std::size_t w, std::size_t c,
                const std::vector<double>& k) {
    const long r = static_cast<long>(k.size() / 2);
    std::vector<double> tmp(h * w * c, 0.0);
    auto clampi = [](long v, std::size_t n) { return static_cast<std::size_t>(std::clamp(v, 0L, static_cast<long>(n) - 1)); };
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t t = 0; t < k.size(); ++t) {
                    const std::size_t xx = clampi(static_cast<long>(x) + static_cast<long>(t) - r, w);
                    acc += k[t] * src[(y * w + xx) * c + ch];
                }
                tmp[(y * w + x) * c + ch] = acc;
            }
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t t = 0; t < k.size(); ++t) {
                    const std::size_t yy = clampi(static_cast<long>(y) + static_cast<long>(t) - r, h);
                    acc += k[t] * tmp[(yy * w + x) * c + ch];
                }
                dst[(y * w + x) * c + ch] = acc;
            }
}

void flip_image(double* img, std::size_t h, std::size_t w, std::size_t c) {
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w / 2; ++x)
            for (std::size_t ch = 0; ch < c; ++ch)
                std::swap(img[(y * w + x) * c + ch], img[(y * w + (w - 1 - x)) * c + ch]);
}

// Column selector: rows x 4 -> rows x 2 picking columns (first, first + 1).
Tensor take_pair(const Tensor& x, std::size_t first) {
    std::vector<double> sel(4 * 2, 0.0);
    sel[first * 2 + 0] = 1.0;
    sel[(first + 1) * 2 + 1] = 1.0;
    return matmul(x, Tensor::constant({4, 2}, std::move(sel)));
}

// rows x 2 -> rows x 4 with the pair placed at columns (first, first + 1).
Tensor place_pair(const Tensor& x, std::size_t first) {
    std::vector<double> sel(2 * 4, 0.0);
    sel[0 * 4 + first] = 1.0;
    sel[1 * 4 + first + 1] = 1.0;
    return matmul(x, Tensor::constant({2, 4}, std::move(sel)));
}

}  // namespace

void AugmentConfig::validate() const {
    check_prob("jitter_prob", jitter_prob);
    check_prob("blur_prob", blur_prob);
    check_prob("flip_prob", flip_prob);
    if (brightness < 0 || contrast < 0 || saturation < 0) throw ConfigError("augment jitter strengths must be >= 0");
    if (!(hue >= 0.0 && hue <= 0.5)) throw ConfigError("augment.hue must lie in [0, 0.5]");
    if (blur_kernel == 0 || blur_kernel % 2 == 0) throw ConfigError("augment.blur_kernel must be odd");
    if (!(blur_sigma_min > 0.0 && blur_sigma_max >= blur_sigma_min)) {
        throw ConfigError("augment blur sigma range must satisfy 0 < min <= max");
    }
}

AugmentConfig AugmentConfig::disabled() {
    AugmentConfig a;
    a.brightness = a.contrast = a.saturation = a.hue = 0.0;
    a.jitter_prob = a.blur_prob = a.flip_prob = 0.0;
    return a;
}

ViewMode parse_view_mode(std::string_view name) {
    if (name == "learned") return ViewMode::learned;
    if (name == "random_crop") return ViewMode::random_crop;
    if (name == "identity") return ViewMode::identity;
    throw ConfigError("unknown view mode '" + std::string(name) + "'");
}

std::string_view view_mode_name(ViewMode mode) {
    switch (mode) {
        case ViewMode::learned: return "learned";
        case ViewMode::random_crop: return "random_crop";
        case ViewMode::identity: return "identity";
    }
    return "learned";
}

void LocaliserConfig::validate() const {
    if (conv_channels.empty()) throw ConfigError("views.conv_channels must not be empty");
    const std::size_t factor = std::size_t{1} << conv_channels.size();
    if (image_size == 0 || image_size % factor != 0) {
        throw ConfigError("views: image_size must be a multiple of " + std::to_string(factor));
    }
    if (!(scale_min > 0.0 && scale_min <= scale_max && scale_max <= 1.0)) {
        throw ConfigError("views: scale bounds must satisfy 0 < scale_min <= scale_max <= 1");
    }
}

Tensor pre_augment(const Tensor& images, const AugmentConfig& cfg, std::mt19937_64& rng) {
    check_images("pre_augment", images);
    const std::size_t b = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
    const std::size_t plane = h * w * c;
    std::vector<double> out(images.values().begin(), images.values().end());
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto factor = [&](double s) {
        return s > 0.0 ? std::uniform_real_distribution<double>(std::max(0.0, 1.0 - s), 1.0 + s)(rng) : 1.0;
    };
    std::vector<double> scratch(plane);
    for (std::size_t n = 0; n < b; ++n) {
        double* img = out.data() + n * plane;
        if (unit(rng) < cfg.jitter_prob && c == 3) {
            const double br = factor(cfg.brightness);
            const double co = factor(cfg.contrast);
            const double sa = factor(cfg.saturation);
            const double hu = cfg.hue > 0.0 ? std::uniform_real_distribution<double>(-cfg.hue, cfg.hue)(rng) : 0.0;
            jitter_image(img, h * w, br, co, sa, hu);
        }
        if (unit(rng) < cfg.blur_prob) {
            const double sigma = std::uniform_real_distribution<double>(cfg.blur_sigma_min, cfg.blur_sigma_max)(rng);
            std::copy(img, img + plane, scratch.begin());
            blur_image(scratch.data(), img, h, w, c, gaussian_kernel(cfg.blur_kernel, sigma));
        }
        if (unit(rng) < cfg.flip_prob) flip_image(img, h, w, c);
        for (std::size_t i = 0; i < plane; ++i) img[i] = std::clamp(img[i], 0.0, 1.0);
    }
    return Tensor::constant(images.shape(), std::move(out));
}

Tensor flip_horizontal(const Tensor& images) {
    check_images("flip_horizontal", images);
    const std::size_t plane = images.numel() / images.dim(0);
    std::vector<double> out(images.values().begin(), images.values().end());
    for (std::size_t n = 0; n < images.dim(0); ++n)
        flip_image(out.data() + n * plane, images.dim(1), images.dim(2), images.dim(3));
    return Tensor::constant(images.shape(), std::move(out));
}

Tensor gaussian_blur(const Tensor& images, std::size_t kernel, double sigma) {
    check_images("gaussian_blur", images);
    if (kernel == 0 || kernel % 2 == 0) throw std::invalid_argument("gaussian_blur: kernel must be odd");
    const std::size_t plane = images.numel() / images.dim(0);
    std::vector<double> out(images.numel());
    const auto k = gaussian_kernel(kernel, sigma);
    for (std::size_t n = 0; n < images.dim(0); ++n)
        blur_image(images.values().data() + n * plane, out.data() + n * plane, images.dim(1),
                   images.dim(2), images.dim(3), k);
    return Tensor::constant(images.shape(), std::move(out));
}

ParamSet init_localiser(const LocaliserConfig& cfg, std::mt19937_64& rng, bool identity_init) {
    cfg.validate();
    ParamSet p;
    std::size_t c_in = cfg.image_channels;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        const std::size_t c_out = cfg.conv_channels[i];
        const std::string prefix = "loc.conv" + std::to_string(i);
        p.add(prefix + ".w", he_normal({9 * c_in, c_out}, 9 * c_in, rng));
        p.add(prefix + ".b", Tensor::zeros({c_out}));
        c_in = c_out;
    }
    const std::size_t side = cfg.image_size >> cfg.conv_channels.size();
    const std::size_t flat = side * side * c_in;
    if (identity_init) {
        p.add("loc.out.w", Tensor::zeros({flat, 4}));
    } else {
        std::normal_distribution<double> dist(0.0, 1.0 / std::sqrt(static_cast<double>(flat)));
        std::vector<double> w(flat * 4);
        for (auto& v : w) v = dist(rng);
        p.add("loc.out.w", Tensor::constant({flat, 4}, std::move(w)));
    }
    p.add("loc.out.b", Tensor::zeros({4}));
    return p;
}

Tensor localise_raw(const LocaliserConfig& cfg, const ParamSet& gamma, const Tensor& images) {
    check_images("localise", images);
    if (images.dim(1) != cfg.image_size || images.dim(2) != cfg.image_size ||
        images.dim(3) != cfg.image_channels) {
        throw std::invalid_argument("localise: images " + to_string(images.shape()) +
                                    " do not match the configured size");
    }
    Tensor x = images;
    for (std::size_t i = 0; i < cfg.conv_channels.size(); ++i) {
        const std::string prefix = "loc.conv" + std::to_string(i);
        x = avg_pool2(relu(layers::conv3x3(x, gamma.at(prefix + ".w"), gamma.at(prefix + ".b"))));
    }
    const std::size_t b = x.dim(0);
    return layers::linear(reshape(x, {b, x.numel() / b}), gamma.at("loc.out.w"), gamma.at("loc.out.b"));
}

Tensor bound_affine(const LocaliserConfig& cfg, const Tensor& raw) {
    if (raw.rank() != 2 || raw.dim(1) != 4) {
        throw std::invalid_argument("bound_affine: expected batch x 4, got " + to_string(raw.shape()));
    }
    // scale_max - |raw|: the identity warp sits at raw = 0 and every nonzero
    // raw value shrinks the window, so a view module started at the identity
    // is never pinned against the upper bound.
    const Tensor scales =
        clamp(add_scalar(neg(abs(take_pair(raw, 0))), cfg.scale_max), cfg.scale_min, cfg.scale_max);
    const Tensor room = add_scalar(neg(scales), 1.0);
    const Tensor shifts = mul(tanh(take_pair(raw, 2)), room);
    return add(place_pair(scales, 0), place_pair(shifts, 2));
}

Tensor localise(const LocaliserConfig& cfg, const ParamSet& gamma, const Tensor& images) {
    return bound_affine(cfg, localise_raw(cfg, gamma, images));
}

Tensor random_affine(const LocaliserConfig& cfg, std::size_t batch, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> scale_dist(cfg.scale_min, cfg.scale_max);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    std::vector<double> p(batch * 4);
    for (std::size_t n = 0; n < batch; ++n) {
        const double sx = scale_dist(rng), sy = scale_dist(rng);
        p[4 * n + 0] = sx;
        p[4 * n + 1] = sy;
        p[4 * n + 2] = unit(rng) * (1.0 - sx);
        p[4 * n + 3] = unit(rng) * (1.0 - sy);
    }
    return Tensor::constant({batch, 4}, std::move(p));
}

Tensor identity_affine(std::size_t batch) {
    std::vector<double> p(batch * 4, 0.0);
    for (std::size_t n = 0; n < batch; ++n) p[4 * n] = p[4 * n + 1] = 1.0;
    return Tensor::constant({batch, 4}, std::move(p));
}

Tensor warp(const Tensor& images, const Tensor& affine) {
    check_images("warp", images);
    return bilinear_sample(images, affine_grid(affine, images.dim(1), images.dim(2)));
}

Views make_views(const LocaliserConfig& cfg, ViewMode mode, const ParamSet& gamma1,
                 const ParamSet& gamma2, const Tensor& images, const AugmentConfig& aug,
                 std::mt19937_64& rng) {
    check_images("make_views", images);
    Views v;
    v.augmented_first = pre_augment(images, aug, rng);
    v.augmented_second = aug.independent_per_branch ? pre_augment(images, aug, rng) : v.augmented_first;
    const std::size_t b = images.dim(0);
    switch (mode) {
        case ViewMode::learned:
            v.affine_first = localise(cfg, gamma1, v.augmented_first);
            v.affine_second = localise(cfg, gamma2, v.augmented_second);
            break;
        case ViewMode::random_crop:
            v.affine_first = random_affine(cfg, b, rng);
            v.affine_second = random_affine(cfg, b, rng);
            break;
        case ViewMode::identity:
            v.affine_first = identity_affine(b);
            v.affine_second = identity_affine(b);
            break;
    }
    v.first = warp(v.augmented_first, v.affine_first);
    v.second = warp(v.augmented_second, v.affine_second);
    return v;
}

}  // namespace vlcl::autoview
