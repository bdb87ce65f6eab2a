#pragma once

// Finite-difference checks of the analytic gradients, from single ops up to
// the full two-stage update. Shared by the unit tests and the CLI.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vlcl/tensor.hpp"

namespace vlcl::gradcheck {

struct CheckResult {
    std::string name;
    double max_error = 0.0;  // largest relative deviation seen
    double tolerance = 0.0;
    double worst_analytic = 0.0;  // the pair behind max_error
    double worst_numeric = 0.0;
    std::size_t comparisons = 0;
    double seconds = 0.0;

    bool passed() const { return max_error <= tolerance; }
};

using ScalarFn = std::function<ag::Tensor(const std::vector<ag::Tensor>&)>;

/// |a - b| / max(|a|, |b|, floor)
double relative_error(double a, double b, double floor);

/// Compares the gradient of `f` against central differences on every entry of
/// every input. Inputs are re-created as leaves internally.
CheckResult compare_gradients(const std::string& name, const ScalarFn& f, const std::vector<ag::Tensor>& inputs,
                              double step, double tolerance, double floor = 1e-7);

/// Hessian-vector products (gradient of <grad f, v>) against central
/// differences of the gradient along random directions v.
CheckResult compare_second_order(const std::string& name, const ScalarFn& f, const std::vector<ag::Tensor>& inputs,
                                 std::uint64_t seed, std::size_t directions = 3, double step = 1e-5,
                                 double tolerance = 1e-5, double floor = 1e-7);

/// Bilinear sampler on random 8x8 images: gradients w.r.t. image values and
/// grid coordinates, step 1e-3, sample points kept away from pixel knots.
CheckResult check_bilinear(std::size_t images = 20, std::uint64_t seed = 1);

/// Every differentiable op, first order.
std::vector<CheckResult> check_ops(std::uint64_t seed = 3);

/// Every differentiable op except the bilinear gradient kernels, second order.
std::vector<CheckResult> check_ops_second_order(std::uint64_t seed = 4);

/// Encoder, projection head and meta loss w.r.t. the encoder parameters.
CheckResult check_encoder(std::uint64_t seed = 5);

/// Localiser, bounded affine parameters and warp w.r.t. the localiser weights.
CheckResult check_localiser(std::uint64_t seed = 6);

/// d L_meta(theta_next(gamma)) / d gamma from the trainer's two stages against
/// central differences through a full re-run of stage one, on a tiny pipeline
/// (8-d features, two-block nets, plain SGD inner step). One comparison along a
/// random direction plus the largest analytic coordinates, per seed.
CheckResult check_two_stage(std::size_t seeds = 10, std::uint64_t first_seed = 100);

/// All of the above.
std::vector<CheckResult> run_all();

std::string format(const CheckResult& r);

}  // namespace vlcl::gradcheck
