#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "vlcl/datasets.hpp"
#include "vlcl/error.hpp"

namespace vlcl::datasets {

namespace {

constexpr std::size_t kShapes = 8;

// Silhouette membership in the shape's own frame, roughly filling [-1, 1]^2.
bool inside(std::size_t shape, double u, double v) {
    const double r = std::hypot(u, v);
    switch (shape) {
        case 0: return r < 1.0;                                                   // disk
        case 1: return std::max(std::abs(u), std::abs(v)) < 0.85;                  // square
        case 2: return v > -0.75 && v < 0.85 && std::abs(u) < 0.55 * (0.85 - v);   // triangle
        case 3: return r < 1.0 && r > 0.55;                                        // ring
        case 4: return std::max(std::abs(u), std::abs(v)) < 0.95 &&
                       std::min(std::abs(u), std::abs(v)) < 0.35;                  // cross
        case 5: return std::abs(u) + std::abs(v) < 1.1;                            // diamond
        case 6: return std::abs(u) < 0.95 && std::abs(v) < 0.45;                   // bar
        default: return r < 1.0 && std::hypot(u - 0.45, v) > 0.7;                  // crescent
    }
}

void hsv_to_rgb(double h, double s, double v, double* rgb) {
    h = h - std::floor(h);
    const double x = h * 6.0;
    const int sector = static_cast<int>(x) % 6;
    const double f = x - std::floor(x);
    const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
    const double table[6][3] = {{v, t, p}, {q, v, p}, {p, v, t}, {p, q, v}, {t, p, v}, {v, p, q}};
    std::copy_n(table[sector], 3, rgb);
}

enum class Pattern { stripes, checker, dots, rings };
constexpr std::size_t kPatterns = 4;

// Coarse class -> (shape, pattern). The pattern index is staggered so every
// consecutive block of shapes-many classes and every residue class mod
// kPatterns covers several patterns; ids 0..31 enumerate all 32 pairs.
struct ClassLook {
    std::size_t shape;
    Pattern pattern;
};

ClassLook class_look(std::size_t coarse) {
    return {coarse % kShapes, static_cast<Pattern>((coarse + coarse / kShapes) % kPatterns)};
}

struct SubcatLook {
    double hue;     // foreground hue centre, turns
    double angle;   // pattern orientation, radians
    double period;  // pattern period as a fraction of the image width
};

SubcatLook subcat_look(std::size_t coarse, std::size_t sub, std::size_t subcats, Pattern p) {
    const double t = subcats > 1 ? static_cast<double>(sub) / static_cast<double>(subcats - 1) : 0.0;
    SubcatLook l;
    // Golden-ratio steps keep the hues of neighbouring ids far apart.
    l.hue = 0.618034 * static_cast<double>(coarse * 7 + sub);
    // Orientations stay within [0, 90] degrees so a mirror image never lands
    // on a sibling's orientation.
    l.angle = 0.5 * std::numbers::pi * t;
    l.period = 0.6;
    if (p == Pattern::checker) l.angle = 0.25 * std::numbers::pi * t;
    if (p == Pattern::rings) {
        l.angle = 0.0;
        l.period = 0.4 + 0.4 * t;
    }
    return l;
}

// Pattern intensity in [0, 1] at normalized image position (gx, gy).
double pattern_value(Pattern p, const SubcatLook& l, double gx, double gy, double cx, double cy, double phase) {
    const double two_pi = 2.0 * std::numbers::pi;
    const double ca = std::cos(l.angle), sa = std::sin(l.angle);
    const double a = (ca * gx + sa * gy) / l.period, b = (-sa * gx + ca * gy) / l.period;
    switch (p) {
        case Pattern::stripes: return 0.5 + 0.5 * std::sin(two_pi * a + phase);
        case Pattern::checker: return std::sin(two_pi * a + phase) * std::sin(two_pi * b + phase) > 0.0 ? 1.0 : 0.0;
        case Pattern::dots: return std::cos(two_pi * a + phase) + std::cos(two_pi * b + phase) > 1.0 ? 1.0 : 0.0;
        case Pattern::rings: return 0.5 + 0.5 * std::sin(two_pi * std::hypot(gx - cx, gy - cy) / l.period + phase);
    }
    return 0.0;
}

}  // namespace

void SyntheticSpec::validate() const {
    if (image_size < 16) throw ConfigError("synthetic.image_size must be >= 16");
    if (num_coarse_classes == 0 || subcats_per_class == 0 || samples_per_subcat == 0) {
        throw ConfigError("synthetic counts must be >= 1");
    }
    if (!(noise_std >= 0.0)) throw ConfigError("synthetic.noise_std must be >= 0");
    if (!(hue_jitter >= 0.0 && hue_jitter <= 1.0)) throw ConfigError("synthetic.hue_jitter must lie in [0, 1]");
}

Dataset generate_synthetic(const SyntheticSpec& spec) {
    spec.validate();
    const std::size_t n = spec.image_size;
    const std::size_t per_class = spec.subcats_per_class * spec.samples_per_subcat;
    Dataset d;
    d.height = d.width = n;
    d.channels = 3;
    d.pixels.resize(spec.num_coarse_classes * per_class * n * n * 3);
    const double px = 2.0 / static_cast<double>(n);

    std::size_t img = 0;
    for (std::size_t c = 0; c < spec.num_coarse_classes; ++c) {
        const std::size_t cid = spec.first_class + c;
        const ClassLook cl = class_look(cid);
        d.class_names.push_back("class" + std::to_string(cid));
        for (std::size_t s = 0; s < spec.subcats_per_class; ++s) {
            d.fine_names.push_back("class" + std::to_string(cid) + "_sub" + std::to_string(s));
            const SubcatLook l = subcat_look(cid, s, spec.subcats_per_class, cl.pattern);
            std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                              static_cast<std::uint32_t>(cid), static_cast<std::uint32_t>(s)};
            std::mt19937_64 rng(seq);
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            std::normal_distribution<double> noise(0.0, 1.0);
            for (std::size_t k = 0; k < spec.samples_per_subcat; ++k, ++img) {
                // Pose, background and the exact foreground tint are per-image nuisance.
                const double cx = 0.3 * (unit(rng) - 0.5), cy = 0.3 * (unit(rng) - 0.5);
                const double radius = 0.65 + 0.2 * unit(rng);
                const double rot = 0.4 * (unit(rng) - 0.5);
                const double phase = 2.0 * std::numbers::pi * unit(rng);
                double fg[3], bg[3];
                hsv_to_rgb(l.hue + spec.hue_jitter * (unit(rng) - 0.5), 0.5 + 0.4 * unit(rng), 1.0, fg);
                hsv_to_rgb(unit(rng), 0.2 + 0.4 * unit(rng), 0.15 + 0.25 * unit(rng), bg);
                const double grad_x = 0.2 * (unit(rng) - 0.5), grad_y = 0.2 * (unit(rng) - 0.5);
                const double cr = std::cos(rot), sr = std::sin(rot);
                double* out = d.pixels.data() + img * n * n * 3;
                for (std::size_t y = 0; y < n; ++y) {
                    for (std::size_t x = 0; x < n; ++x) {
                        double acc[3] = {0, 0, 0};
                        // 2x2 supersampling for smoother edges.
                        for (int sy = 0; sy < 2; ++sy) {
                            for (int sx = 0; sx < 2; ++sx) {
                                const double gx = -1.0 + (x + 0.25 + 0.5 * sx) * px;
                                const double gy = -1.0 + (y + 0.25 + 0.5 * sy) * px;
                                const double dx = (gx - cx) / radius, dy = (gy - cy) / radius;
                                const double u = cr * dx + sr * dy, v = -sr * dx + cr * dy;
                                if (inside(cl.shape, u, v)) {
                                    const double value =
                                        0.3 + 0.65 * pattern_value(cl.pattern, l, gx, gy, cx, cy, phase);
                                    for (int ch = 0; ch < 3; ++ch) acc[ch] += 0.25 * fg[ch] * value;
                                } else {
                                    const double shade = 1.0 + grad_x * gx + grad_y * gy;
                                    for (int ch = 0; ch < 3; ++ch) acc[ch] += 0.25 * bg[ch] * shade;
                                }
                            }
                        }
                        for (int ch = 0; ch < 3; ++ch) {
                            double value = acc[ch];
                            if (spec.noise_std > 0.0) value += spec.noise_std * noise(rng);
                            out[(y * n + x) * 3 + ch] = std::clamp(value, 0.0, 1.0);
                        }
                    }
                }
                d.labels.push_back(static_cast<int>(c));
                d.fine_labels.push_back(static_cast<int>(c * spec.subcats_per_class + s));
            }
        }
    }
    return d;
}

}  // namespace vlcl::datasets
