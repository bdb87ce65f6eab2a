#pragma once

#include <cmath>
#include <cstddef>

#include "vlcl/kernels.hpp"

namespace vlcl::kernels::detail {
// Internal linkage: this header is also compiled into the AVX2 translation unit,
// whose copies must never be picked by the linker for scalar callers.
namespace {

// Normalized [-1, 1] -> pixel index scale; -1 and +1 land on border pixel centers.
inline double coord_scale(std::size_t extent) {
    return extent > 1 ? 0.5 * static_cast<double>(extent - 1) : 0.0;
}

struct Taps {
    std::size_t offset[4];  // pixel offsets within one image (row * in_w + col)
    double weight[4];
    bool valid[4];
    double wx0, wx1, wy0, wy1;
};

// Tap order: (x0,y0) (x1,y0) (x0,y1) (x1,y1).
inline Taps taps(const BilinearShape& s, double gx, double gy) {
    const double px = (gx + 1.0) * coord_scale(s.in_w);
    const double py = (gy + 1.0) * coord_scale(s.in_h);
    const double fx = std::floor(px);
    const double fy = std::floor(py);
    Taps t{};
    t.wx1 = px - fx;
    t.wx0 = 1.0 - t.wx1;
    t.wy1 = py - fy;
    t.wy0 = 1.0 - t.wy1;
    const long x0 = static_cast<long>(fx);
    const long y0 = static_cast<long>(fy);
    const long w = static_cast<long>(s.in_w);
    const long h = static_cast<long>(s.in_h);
    const long xs[4] = {x0, x0 + 1, x0, x0 + 1};
    const long ys[4] = {y0, y0, y0 + 1, y0 + 1};
    const double ws[4] = {t.wx0 * t.wy0, t.wx1 * t.wy0, t.wx0 * t.wy1, t.wx1 * t.wy1};
    for (int q = 0; q < 4; ++q) {
        t.valid[q] = xs[q] >= 0 && xs[q] < w && ys[q] >= 0 && ys[q] < h;
        t.offset[q] = t.valid[q] ? static_cast<std::size_t>(ys[q] * w + xs[q]) : 0;
        t.weight[q] = ws[q];
    }
    return t;
}

}  // namespace
}  // namespace vlcl::kernels::detail
