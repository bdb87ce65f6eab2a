#include "vlcl/gradcheck.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "vlcl/autoview.hpp"
#include "vlcl/contrast.hpp"
#include "vlcl/encoder.hpp"
#include "vlcl/layers.hpp"
#include "vlcl/ops.hpp"
#include "vlcl/protohead.hpp"
#include "vlcl/trainer.hpp"

namespace vlcl::gradcheck {

using ag::Tensor;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::vector<double> uniform(std::size_t n, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(lo, hi);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

Tensor random_tensor(ag::Shape shape, double lo, double hi, std::mt19937_64& rng) {
    const std::size_t n = ag::numel(shape);
    return Tensor::constant(std::move(shape), uniform(n, lo, hi, rng));
}

std::vector<Tensor> leaves(const std::vector<Tensor>& inputs) {
    std::vector<Tensor> out;
    for (const auto& t : inputs) out.push_back(t.detach().as_parameter());
    return out;
}

double evaluate(const ScalarFn& f, const std::vector<Tensor>& inputs) {
    ag::NoGradGuard guard;
    return f(inputs).item();
}

// inputs with entry `index` of input `which` moved by delta
std::vector<Tensor> nudged(const std::vector<Tensor>& inputs, std::size_t which, std::size_t index, double delta) {
    std::vector<Tensor> out = inputs;
    std::vector<double> v(inputs[which].values().begin(), inputs[which].values().end());
    v[index] += delta;
    out[which] = Tensor::constant(inputs[which].shape(), std::move(v));
    return out;
}

std::vector<Tensor> along(const std::vector<Tensor>& inputs, const std::vector<std::vector<double>>& dir, double t) {
    std::vector<Tensor> out;
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        std::vector<double> v(inputs[i].values().begin(), inputs[i].values().end());
        for (std::size_t k = 0; k < v.size(); ++k) v[k] += t * dir[i][k];
        out.push_back(Tensor::parameter(inputs[i].shape(), std::move(v)));
    }
    return out;
}

}  // namespace

double relative_error(double a, double b, double floor) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

namespace {

void record(CheckResult& r, double analytic, double numeric, double floor) {
    const double e = relative_error(analytic, numeric, floor);
    if (e >= r.max_error) {
        r.max_error = e;
        r.worst_analytic = analytic;
        r.worst_numeric = numeric;
    }
    ++r.comparisons;
}

void merge(CheckResult& total, const CheckResult& part) {
    if (part.max_error >= total.max_error) {
        total.max_error = part.max_error;
        total.worst_analytic = part.worst_analytic;
        total.worst_numeric = part.worst_numeric;
    }
    total.comparisons += part.comparisons;
}

}  // namespace

CheckResult compare_gradients(const std::string& name, const ScalarFn& f, const std::vector<Tensor>& inputs,
                              double step, double tolerance, double floor) {
    const auto t0 = Clock::now();
    CheckResult r{name, 0.0, tolerance};
    const auto xs = leaves(inputs);
    const auto grads = ag::grad(f(xs), xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t k = 0; k < xs[i].numel(); ++k) {
            const double numeric =
                (evaluate(f, nudged(xs, i, k, step)) - evaluate(f, nudged(xs, i, k, -step))) / (2.0 * step);
            record(r, grads[i].values()[k], numeric, floor);
        }
    }
    r.seconds = since(t0);
    return r;
}

CheckResult compare_second_order(const std::string& name, const ScalarFn& f, const std::vector<Tensor>& inputs,
                                 std::uint64_t seed, std::size_t directions, double step, double tolerance,
                                 double floor) {
    const auto t0 = Clock::now();
    CheckResult r{name, 0.0, tolerance};
    std::mt19937_64 rng(seed);
    const auto xs = leaves(inputs);
    auto gradient = [&](const std::vector<Tensor>& at) { return ag::grad(f(at), at); };
    for (std::size_t d = 0; d < directions; ++d) {
        std::vector<std::vector<double>> dir;
        std::vector<Tensor> dir_t;
        for (const auto& x : xs) {
            dir.push_back(uniform(x.numel(), -1.0, 1.0, rng));
            dir_t.push_back(Tensor::constant(x.shape(), dir.back()));
        }
        const auto g = ag::grad(f(xs), xs, /*create_graph=*/true);
        Tensor gv = Tensor::scalar(0.0);
        for (std::size_t i = 0; i < xs.size(); ++i) gv = ag::add(gv, ag::sum(ag::mul(g[i], dir_t[i])));
        const auto hv = ag::grad(gv, xs);
        const auto plus = gradient(along(xs, dir, step));
        const auto minus = gradient(along(xs, dir, -step));
        for (std::size_t i = 0; i < xs.size(); ++i) {
            for (std::size_t k = 0; k < xs[i].numel(); ++k) {
                const double numeric = (plus[i].values()[k] - minus[i].values()[k]) / (2.0 * step);
                record(r, hv[i].values()[k], numeric, floor);
            }
        }
    }
    r.seconds = since(t0);
    return r;
}

CheckResult check_bilinear(std::size_t images, std::uint64_t seed) {
    const auto t0 = Clock::now();
    CheckResult total{"bilinear_sampler", 0.0, 1e-3};
    std::mt19937_64 rng(seed);
    constexpr std::size_t n = 8, channels = 3, out = 6;
    const double scale = 0.5 * (n - 1);
    std::uniform_int_distribution<int> cell(0, n - 2);
    std::uniform_real_distribution<double> frac(0.1, 0.9);
    for (std::size_t i = 0; i < images; ++i) {
        const Tensor image = random_tensor({1, n, n, channels}, 0.0, 1.0, rng);
        std::vector<double> g(out * out * 2);
        // Pixel coordinate = integer cell + fraction in [0.1, 0.9]: never on a knot.
        for (auto& v : g) v = (cell(rng) + frac(rng)) / scale - 1.0;
        const Tensor grid = Tensor::constant({1, out, out, 2}, std::move(g));
        const Tensor w = random_tensor({1, out, out, channels}, -1.0, 1.0, rng);
        const ScalarFn f = [&](const std::vector<Tensor>& x) {
            return ag::sum(ag::mul(ag::bilinear_sample(x[0], x[1]), w));
        };
        const auto r = compare_gradients("bilinear", f, {image, grid}, 1e-3, 1e-3, 1e-6);
        merge(total, r);
    }
    total.seconds = since(t0);
    return total;
}

namespace {

struct OpCase {
    std::string name;
    ScalarFn f;
    std::vector<Tensor> inputs;
};

std::vector<OpCase> op_cases(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto R = [&](ag::Shape s, double lo = -1.0, double hi = 1.0) { return random_tensor(std::move(s), lo, hi, rng); };
    auto W = [&](ag::Shape s) { return random_tensor(std::move(s), -1.0, 1.0, rng); };
    std::vector<OpCase> cases;
    auto add = [&](std::string name, ScalarFn f, std::vector<Tensor> in) {
        cases.push_back({std::move(name), std::move(f), std::move(in)});
    };

    const Tensor w34 = W({3, 4});
    add("add_sub_mul", [=](const auto& x) { return ag::sum(ag::mul(ag::sub(ag::add(x[0], x[1]), w34), ag::mul(x[0], x[1]))); },
        {R({3, 4}), R({3, 4})});
    add("neg_scale_offset", [=](const auto& x) { return ag::sum(ag::mul(ag::add_scalar(ag::scale(ag::neg(x[0]), 1.7), 0.3), ag::square(x[0]))); },
        {R({3, 4})});
    add("exp_log", [=](const auto& x) { return ag::sum(ag::mul(ag::log(ag::add_scalar(ag::exp(x[0]), 0.5)), w34)); },
        {R({3, 4})});
    add("tanh_sigmoid", [=](const auto& x) { return ag::sum(ag::mul(ag::tanh(x[0]), ag::sigmoid(ag::scale(x[0], 2.0)))); },
        {R({3, 4}, -2.0, 2.0)});
    add("relu_abs", [=](const auto& x) { return ag::sum(ag::mul(ag::square(ag::relu(x[0])), ag::abs(ag::scale(x[0], 3.0)))); },
        {R({3, 4})});
    add("clamp", [=](const auto& x) { return ag::sum(ag::mul(ag::square(ag::clamp(x[0], -0.5, 0.5)), w34)); },
        {R({3, 4})});
    add("pow", [=](const auto& x) { return ag::sum(ag::mul(ag::pow(x[0], 1.5), w34)); }, {R({3, 4}, 0.2, 2.0)});
    add("mean", [=](const auto& x) { return ag::square(ag::mean(ag::mul(x[0], x[0]))); }, {R({3, 4})});
    const Tensor w25 = W({2, 5});
    add("reduce_broadcast_mid", [=](const auto& x) {
            const Tensor r = ag::reduce_mid(ag::square(x[0]), 2, 4, 5);
            return ag::sum(ag::mul(ag::broadcast_mid(ag::mul(r, w25), 2, 3, 5), ag::reshape(x[1], {2, 3, 5})));
        },
        {R({2, 4, 5}), R({30})});
    const Tensor w4 = W({4}), w3 = W({3});
    add("row_col_expand", [=](const auto& x) {
            const Tensor rows = ag::row_sum(ag::square(x[0]));
            const Tensor cols = ag::col_sum(ag::tanh(x[0]));
            return ag::sum(ag::mul(ag::add(ag::expand_rows(ag::mul(cols, w4), 3), ag::expand_cols(ag::mul(rows, w3), 4)), x[0]));
        },
        {R({3, 4})});
    const Tensor w25b = W({2, 5});
    add("matmul", [=](const auto& x) {
            const Tensor a = ag::matmul(x[0], x[1]);
            const Tensor b = ag::matmul(x[0], x[2], false, true);
            const Tensor c = ag::matmul(x[1], ag::tanh(x[1]), true, false);
            return ag::add(ag::add(ag::sum(ag::mul(ag::square(a), w25b)), ag::sum(ag::square(b))), ag::sum(c));
        },
        {R({2, 3}), R({3, 5}), R({4, 3})});
    const Tensor w6x2 = W({6, 2});
    add("slice_embed_concat", [=](const auto& x) {
            const Tensor s = ag::slice_rows(x[0], 1, 2);
            const Tensor e = ag::embed_rows(ag::square(s), 2, 6);
            const Tensor c = ag::concat_rows({ag::tanh(x[0]), ag::slice_rows(x[1], 0, 2)});
            return ag::add(ag::sum(ag::mul(e, w6x2)), ag::sum(ag::square(c)));
        },
        {R({4, 2}), R({3, 2})});
    const Tensor wcols = W({2 * 4 * 4, 9 * 2});
    add("im2col_col2im", [=](const auto& x) {
            const Tensor cols = ag::im2col(ag::square(x[0]), 3, 1);
            const Tensor back = ag::col2im(ag::mul(cols, wcols), {2, 4, 4, 2}, 3, 1);
            return ag::sum(ag::mul(back, ag::tanh(x[0])));
        },
        {R({2, 4, 4, 2})});
    const Tensor wpool = W({1, 2, 2, 3}), wup = W({1, 4, 4, 3});
    add("avg_pool", [=](const auto& x) {
            const Tensor p = ag::avg_pool2(ag::square(x[0]));
            return ag::add(ag::sum(ag::mul(p, wpool)), ag::sum(ag::mul(ag::avg_pool2_adjoint(ag::tanh(p)), wup)));
        },
        {R({1, 4, 4, 3})});
    const Tensor wgrid = W({2, 3, 4, 2});
    add("affine_grid", [=](const auto& x) {
            const Tensor g = ag::affine_grid(ag::square(x[0]), 3, 4);
            return ag::add(ag::sum(ag::mul(ag::square(g), wgrid)), ag::sum(ag::square(ag::affine_grid_adjoint(ag::tanh(g)))));
        },
        {R({2, 4})});
    const Tensor wconv = W({2, 4, 4, 3});
    add("conv_norm_pool_layers", [=](const auto& x) {
            const Tensor y = layers::sample_norm(layers::conv3x3(x[0], x[1], x[2]));
            const Tensor f = layers::global_avg_pool(ag::tanh(y));
            return ag::add(ag::sum(ag::mul(y, wconv)), ag::sum(layers::logsumexp_rows(f)));
        },
        {R({2, 4, 4, 2}), R({18, 3}), R({3})});
    add("linear_l2norm", [=](const auto& x) {
            const Tensor y = layers::l2_normalize_rows(layers::linear(x[0], x[1], x[2]));
            return ag::sum(ag::mul(y, ag::tanh(y)));
        },
        {R({3, 4}), R({4, 5}), R({5})});
    return cases;
}

}  // namespace

std::vector<CheckResult> check_ops(std::uint64_t seed) {
    std::vector<CheckResult> out;
    for (const auto& c : op_cases(seed)) out.push_back(compare_gradients("op/" + c.name, c.f, c.inputs, 1e-6, 1e-5));
    return out;
}

std::vector<CheckResult> check_ops_second_order(std::uint64_t seed) {
    std::vector<CheckResult> out;
    std::uint64_t k = 0;
    for (const auto& c : op_cases(seed)) out.push_back(compare_second_order("op2/" + c.name, c.f, c.inputs, seed * 31 + ++k));
    return out;
}

namespace {

encoder::EncoderConfig tiny_encoder() {
    encoder::EncoderConfig c;
    c.conv_channels = {6, 8};
    c.feature_dim = 8;
    c.proj_hidden = 16;
    c.proj_dim = 8;
    c.image_size = 8;
    return c;
}

autoview::LocaliserConfig tiny_localiser() {
    autoview::LocaliserConfig c;
    c.conv_channels = {4, 4};
    c.image_size = 8;
    return c;
}

datasets::Dataset random_images(std::size_t classes, std::size_t per_class, std::size_t size,
                                std::mt19937_64& rng) {
    datasets::Dataset d;
    d.height = d.width = size;
    d.channels = 3;
    // Each class is a fixed random template plus per-image noise.
    const std::size_t plane = size * size * 3;
    for (std::size_t c = 0; c < classes; ++c) {
        const auto tmpl = uniform(plane, 0.0, 1.0, rng);
        for (std::size_t i = 0; i < per_class; ++i) {
            const auto noise = uniform(plane, -0.2, 0.2, rng);
            for (std::size_t k = 0; k < plane; ++k) d.pixels.push_back(std::clamp(tmpl[k] + noise[k], 0.0, 1.0));
        }
    }
    for (std::size_t c = 0; c < classes; ++c) {
        d.class_names.push_back("c" + std::to_string(c));
        d.fine_names.push_back("c" + std::to_string(c));
        for (std::size_t i = 0; i < per_class; ++i) {
            d.labels.push_back(static_cast<int>(c));
            d.fine_labels.push_back(static_cast<int>(c));
        }
    }
    return d;
}

}  // namespace

CheckResult check_encoder(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto cfg = tiny_encoder();
    const auto d = random_images(3, 3, cfg.image_size, rng);
    const auto ep = datasets::sample_episode(d, 3, 1, 2, rng);
    const ParamSet theta = encoder::init_parameters(cfg, rng);
    const Tensor wproj = random_tensor({ep.query_images.dim(0), cfg.proj_dim}, -1.0, 1.0, rng);
    const ScalarFn f = [&](const std::vector<Tensor>& x) {
        const ParamSet p = theta.with_tensors(x);
        const Tensor feats = encoder::encode(cfg, p, ag::concat_rows({ep.support_images, ep.query_images}));
        const std::size_t ns = ep.support_images.dim(0), nq = ep.query_images.dim(0);
        const auto protos = protohead::compute_prototypes(ag::slice_rows(feats, 0, ns), ep.support_labels, ep.n_way());
        const Tensor meta = protohead::meta_loss(ag::slice_rows(feats, ns, nq), ep.query_labels, protos, {});
        const Tensor z = encoder::project(cfg, p, ag::slice_rows(feats, ns, nq));
        return ag::add(meta, ag::sum(ag::mul(z, wproj)));
    };
    return compare_gradients("encoder", f, theta.tensors(), 1e-6, 1e-3, 1e-6);
}

CheckResult check_localiser(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto cfg = tiny_localiser();
    const Tensor images = random_tensor({3, cfg.image_size, cfg.image_size, 3}, 0.0, 1.0, rng);
    const ParamSet gamma = autoview::init_localiser(cfg, rng, /*identity_init=*/false);
    const Tensor w = random_tensor(images.shape(), -1.0, 1.0, rng);
    const ScalarFn f = [&](const std::vector<Tensor>& x) {
        const Tensor affine = autoview::localise(cfg, gamma.with_tensors(x), images);
        return ag::sum(ag::mul(autoview::warp(images, affine), w));
    };
    return compare_gradients("localiser", f, gamma.tensors(), 1e-5, 1e-3, 1e-6);
}

CheckResult check_two_stage(std::size_t seeds, std::uint64_t first_seed) {
    const auto t0 = Clock::now();
    CheckResult total{"two_stage", 0.0, 0.05};
    trainer::ModelConfig model;
    model.encoder = tiny_encoder();
    model.views = tiny_localiser();
    model.contrast.queue_capacity = 16;
    model.contrast.reduction = contrast::Reduction::mean;
    trainer::TrainConfig cfg;
    cfg.beta = 1.0;
    cfg.momentum = 0.0;
    cfg.nesterov = false;
    cfg.weight_decay = 0.0;
    cfg.clip_norm = 0.0;
    cfg.n_way = 3;
    cfg.k_shot = 1;
    cfg.queries_per_class = 2;
    const double lr = 0.5;

    for (std::size_t s = 0; s < seeds; ++s) {
        cfg.seed = first_seed + s;
        std::mt19937_64 rng(cfg.seed);
        const auto data = random_images(4, 4, model.encoder.image_size, rng);
        trainer::TrainState base = trainer::init_state(model, cfg);
        base.gamma1 = autoview::init_localiser(model.views, rng, false);
        base.gamma2 = autoview::init_localiser(model.views, rng, false);
        {
            const Tensor keys = random_tensor({8, model.encoder.proj_dim}, -1.0, 1.0, rng);
            base.queue.enqueue(layers::l2_normalize_rows(keys));
        }
        const std::vector<datasets::Episode> episodes{
            datasets::sample_episode(data, cfg.n_way, cfg.k_shot, cfg.queries_per_class, rng)};

        auto loss_at = [&](const std::vector<double>& g1, const std::vector<double>& g2) {
            trainer::TrainState st = base;
            st.gamma1 = base.gamma1.unflatten(g1);
            st.gamma2 = base.gamma2.unflatten(g2);
            const auto inner = trainer::inner_update(model, cfg, st, episodes, lr);
            ag::NoGradGuard guard;
            return trainer::episode_meta_loss(model, inner.theta_next.detached(), episodes[0]).item();
        };

        // Analytic gradient from the trainer itself: with eta = 1 the outer step
        // moves gamma by exactly minus the gradient.
        std::vector<double> grad;
        {
            trainer::TrainState st = base;
            trainer::TrainConfig unit = cfg;
            unit.eta = 1.0;
            auto inner = trainer::inner_update(model, unit, st, episodes, lr);
            trainer::outer_update(model, unit, st, inner, episodes);
            const auto b1 = base.gamma1.flatten(), b2 = base.gamma2.flatten();
            const auto a1 = st.gamma1.flatten(), a2 = st.gamma2.flatten();
            for (std::size_t i = 0; i < b1.size(); ++i) grad.push_back(b1[i] - a1[i]);
            for (std::size_t i = 0; i < b2.size(); ++i) grad.push_back(b2[i] - a2[i]);
        }
        const auto g1 = base.gamma1.flatten(), g2 = base.gamma2.flatten();
        auto shifted = [&](const std::vector<double>& dir, double t) {
            std::vector<double> a = g1, b = g2;
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += t * dir[i];
            for (std::size_t i = 0; i < b.size(); ++i) b[i] += t * dir[a.size() + i];
            return loss_at(a, b);
        };
        const double h = 1e-5;
        auto check_direction = [&](const std::vector<double>& dir) {
            const double analytic = std::inner_product(dir.begin(), dir.end(), grad.begin(), 0.0);
            const double numeric = (shifted(dir, h) - shifted(dir, -h)) / (2.0 * h);
            record(total, analytic, numeric, 1e-9);
        };

        std::vector<double> dir = uniform(grad.size(), -1.0, 1.0, rng);
        const double norm = std::sqrt(std::inner_product(dir.begin(), dir.end(), dir.begin(), 0.0));
        for (auto& v : dir) v /= norm;
        check_direction(dir);

        std::vector<std::size_t> order(grad.size());
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + 4, order.end(),
                          [&](std::size_t a, std::size_t b) { return std::abs(grad[a]) > std::abs(grad[b]); });
        spdlog::debug("two_stage seed {}: |grad|max = {:.3e}", cfg.seed, std::abs(grad[order[0]]));
        for (std::size_t k = 0; k < 4; ++k) {
            std::vector<double> e(grad.size(), 0.0);
            e[order[k]] = 1.0;
            check_direction(e);
        }
    }
    total.seconds = since(t0);
    return total;
}

std::vector<CheckResult> run_all() {
    std::vector<CheckResult> out;
    out.push_back(check_bilinear());
    for (auto& r : check_ops()) out.push_back(std::move(r));
    for (auto& r : check_ops_second_order()) out.push_back(std::move(r));
    out.push_back(check_encoder());
    out.push_back(check_localiser());
    out.push_back(check_two_stage());
    return out;
}

std::string format(const CheckResult& r) {
    return fmt::format("{:<28} {} max_rel_err={:.3e} (analytic {:.6e} vs numeric {:.6e}) tol={:.0e} n={} {:.2f}s",
                       r.name, r.passed() ? "PASS" : "FAIL", r.max_error, r.worst_analytic, r.worst_numeric,
                       r.tolerance, r.comparisons, r.seconds);
}

}  // namespace vlcl::gradcheck
