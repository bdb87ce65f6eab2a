// Acceptance checks, one pass/fail line per criterion.
//
//   acceptance                 run all nine
//   acceptance --criteria 1,5  run a subset
//
// Exit status is 0 only when every selected criterion passes.

#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <ctime>
#include <deque>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "../oracles.hpp"
#include "vlcl/autoview.hpp"
#include "vlcl/config.hpp"
#include "vlcl/contrast.hpp"
#include "vlcl/evaluation.hpp"
#include "vlcl/gradcheck.hpp"
#include "vlcl/protohead.hpp"
#include "vlcl/trainer.hpp"

using namespace vlcl;
using ag::Tensor;

namespace {

std::vector<double> vals(const ag::Tensor& t) { return {t.values().begin(), t.values().end()}; }

struct Outcome {
    bool passed = false;
    std::string detail;
};

std::string fixed(double v, int digits = 2) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

std::string sci(double v) {
    std::ostringstream os;
    os.precision(2);
    os << std::scientific << v;
    return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double cpu_seconds() { return static_cast<double>(std::clock()) / CLOCKS_PER_SEC; }

Outcome bilinear_gradcheck() {
    const auto r = gradcheck::check_bilinear(20, 1);
    const bool ok = r.passed() && r.tolerance <= 1e-3 && r.seconds < 10.0;
    return {ok, "max rel err " + sci(r.max_error) + " over " + std::to_string(r.comparisons) + " entries, " +
                    fixed(r.seconds) + " s"};
}

Outcome affine_identity() {
    const auto cfg = config::desk_preset();
    double worst = 0.0;
    std::size_t images = 0;
    std::mt19937_64 rng(1);
    const auto gamma = autoview::init_localiser(cfg.model.views, rng, true);
    for (const auto* src : {&cfg.train_data, &cfg.test_data, &*cfg.probe_data}) {
        const auto d = src->load();
        std::vector<std::size_t> idx(d.size());
        std::iota(idx.begin(), idx.end(), 0);
        const Tensor batch = d.batch(idx);
        // Constant identity parameters and the identity-initialised localiser.
        for (const Tensor& params :
             {autoview::identity_affine(d.size()), autoview::localise(cfg.model.views, gamma, batch)}) {
            const auto out = vals(autoview::warp(batch, params));
            const auto in = batch.values();
            for (std::size_t i = 0; i < in.size(); ++i) worst = std::max(worst, std::abs(out[i] - in[i]));
        }
        images += d.size();
    }
    return {worst <= 1e-6, "max abs err " + sci(worst) + " on " + std::to_string(images) + " images"};
}

Outcome loss_oracles() {
    std::mt19937_64 rng(3);
    const std::size_t n_way = 5, queries = 4, batch = 4, fill = 8, dim = 32;
    double worst_meta = 0.0, worst_con = 0.0;
    for (int trial = 0; trial < 50; ++trial) {
        const auto support = oracles::random_matrix(n_way, dim, rng);
        const auto query = oracles::random_matrix(n_way * queries, dim, rng);
        std::vector<int> sl, ql;
        for (std::size_t c = 0; c < n_way; ++c) {
            sl.push_back(static_cast<int>(c));
            for (std::size_t i = 0; i < queries; ++i) ql.push_back(static_cast<int>(c));
        }
        const auto protos = protohead::compute_prototypes(oracles::to_tensor(support), sl, n_way);
        const double got = protohead::meta_loss(oracles::to_tensor(query), ql, protos, {}).item();
        worst_meta = std::max(worst_meta, std::abs(got - oracles::meta_loss(support, sl, query, ql, n_way)));
    }
    for (int trial = 0; trial < 50; ++trial) {
        const auto q = oracles::random_matrix(batch, dim, rng, true);
        const auto k = oracles::random_matrix(batch, dim, rng, true);
        const auto negatives = oracles::random_matrix(fill, dim, rng, true);
        contrast::NegativeQueue queue(64, dim);
        queue.enqueue(oracles::to_tensor(negatives));
        contrast::ContrastConfig cfg;
        const double got =
            contrast::contrastive_loss(oracles::to_tensor(q), oracles::to_tensor(k), queue, cfg).item();
        worst_con = std::max(worst_con,
                             std::abs(got - oracles::contrastive_loss(q, k, negatives, cfg.temperature)));
    }
    return {worst_meta <= 1e-6 && worst_con <= 1e-6,
            "meta max err " + sci(worst_meta) + ", contrastive max err " + sci(worst_con) + " (50 instances each)"};
}

Outcome momentum_and_queue() {
    const auto cfg = config::desk_preset();
    std::mt19937_64 rng(4);
    auto state = encoder::init_encoders(cfg.model.encoder, rng);
    state.omega = encoder::init_parameters(cfg.model.encoder, rng);

    bool exact = true;
    for (double eps : {0.0, 0.5, 0.9, 0.999, 1.0}) {
        const auto w = state.omega.flatten(), t = state.theta.flatten();
        const auto mixed = encoder::momentum_update(state, eps).omega.flatten();
        for (std::size_t i = 0; i < w.size(); ++i) exact = exact && mixed[i] == eps * w[i] + (1.0 - eps) * t[i];
    }

    bool fifo = true;
    for (int seq = 0; seq < 1000 && fifo; ++seq) {
        const std::size_t capacity = 1 + rng() % 16, dim = 4;
        contrast::NegativeQueue queue(capacity, dim);
        std::deque<std::vector<double>> model;
        const int pushes = 1 + static_cast<int>(rng() % 20);
        for (int p = 0; p < pushes; ++p) {
            const std::size_t b = 1 + rng() % capacity;
            const auto rows = oracles::random_matrix(b, dim, rng, true);
            queue.enqueue(oracles::to_tensor(rows));
            for (const auto& r : rows) {
                model.push_back(r);
                if (model.size() > capacity) model.pop_front();
            }
            fifo = fifo && queue.fill() == model.size();
            for (std::size_t i = 0; i < model.size() && fifo; ++i) {
                const auto r = queue.row(i);
                fifo = std::equal(r.begin(), r.end(), model[i].begin());
            }
        }
    }

    // theta frozen: omega approaches it geometrically.
    double worst = 0.0;
    const double eps = 0.8;
    auto mixing = state;
    for (int i = 0; i < 100; ++i) mixing = encoder::momentum_update(mixing, eps);
    const auto w = mixing.omega.flatten(), t = state.theta.flatten();
    for (std::size_t i = 0; i < w.size(); ++i) worst = std::max(worst, std::abs(w[i] - t[i]));

    return {exact && fifo && worst <= 1e-6, std::string("mix exact: ") + (exact ? "yes" : "no") +
                                                ", FIFO model over 1000 sequences: " + (fifo ? "match" : "MISMATCH") +
                                                ", |omega - theta| after 100 steps (eps 0.8): " + sci(worst)};
}

Outcome second_order() {
    const auto r = gradcheck::check_two_stage(10, 100);
    const bool ok = r.passed() && r.tolerance <= 0.05 && r.seconds < 60.0;
    return {ok, "max rel err " + fixed(100.0 * r.max_error) + "% over 10 seeds, " + fixed(r.seconds) + " s"};
}

Outcome baseline_reduction() {
    auto cfg = config::desk_preset();
    cfg.train.beta = 0.0;
    cfg.train.epochs = 1;
    cfg.train.iterations_per_epoch = 10;
    const auto data = cfg.train_data.load();
    const auto run = trainer::train(cfg.model, cfg.train, data);
    const auto pn = oracles::train_pn(cfg.model, cfg.train, data, 10);
    double worst = 0.0;
    for (std::size_t i = 0; i < 10; ++i) {
        worst = std::max(worst, std::abs(run.log[i].meta_loss - pn.losses[i]));
        worst = std::max(worst, std::abs(run.log[i].total_loss - pn.losses[i]));
    }
    return {worst <= 1e-6, "max loss difference " + sci(worst) + " over 10 iterations"};
}

Outcome desk_learning() {
    const auto cfg = config::desk_preset();
    const auto train = cfg.train_data.load();
    const auto test = cfg.test_data.load();
    const auto init = trainer::init_state(cfg.model, cfg.train);
    const auto untrained = evaluation::evaluate(cfg.model, init.encoders.theta, test, cfg.eval, &train.class_names);

    const double cpu0 = cpu_seconds();
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = trainer::train(cfg.model, cfg.train, train);
    const double cpu = cpu_seconds() - cpu0, wall = seconds_since(t0);
    const auto trained = evaluation::evaluate(cfg.model, result.state.encoders.theta, test, cfg.eval, &train.class_names);

    const bool learned = trained.mean_accuracy >= 90.0;
    const bool chance = std::abs(untrained.mean_accuracy - 20.0) <= 3.0;
    const bool budget = cpu <= 600.0;
    return {learned && chance && budget,
            "trained " + fixed(trained.mean_accuracy) + " +- " + fixed(trained.ci95) + "% (>= 90: " +
                (learned ? "yes" : "no") + "), untrained " + fixed(untrained.mean_accuracy) + " +- " +
                fixed(untrained.ci95) + "% (20 +- 3: " + (chance ? "yes" : "no") + "), training " + fixed(cpu, 0) +
                " s CPU / " + fixed(wall, 0) + " s wall (<= 600: " + (budget ? "yes" : "no") + ")"};
}

// Coarse training labels rebuilt by merging the generator's sub-categories.
datasets::Dataset merged_training_set(const config::RunConfig& cfg) {
    const auto base = cfg.train_data.load();
    datasets::Dataset d = base.fine_as_classes();
    const std::size_t subcats = cfg.train_data.synthetic.subcats_per_class;
    for (std::size_t c = 0; c < base.num_classes(); ++c) {
        // After c merges, coarse class c's sub-categories sit at c .. c + subcats - 1.
        std::vector<int> ids(subcats);
        std::iota(ids.begin(), ids.end(), static_cast<int>(c));
        d = datasets::merge_classes(d, ids, base.class_names[c]);
    }
    if (d.labels != base.labels) throw std::logic_error("merged labels differ from the coarse labels");
    return d;
}

Outcome direction_of_effect() {
    auto cfg = config::desk_preset();
    cfg.train.epochs = 10;
    cfg.train.milestones = {{6, 0.001}, {8, 0.0001}};
    const auto train = merged_training_set(cfg);
    const auto probe = cfg.probe_data->load();
    struct Row {
        double sil = 0.0, acc = 0.0;
    };
    std::map<double, std::vector<Row>> rows;
    std::ostringstream per_seed;
    for (std::uint64_t seed : {1, 2, 3}) {
        for (double beta : {0.0, cfg.train.beta}) {
            auto tc = cfg.train;
            tc.seed = seed;
            tc.beta = beta;
            const auto result = trainer::train(cfg.model, tc, train);
            const auto p = evaluation::fine_probe(cfg.model, result.state.encoders.theta, probe, cfg.probe_eval);
            rows[beta].push_back({p.silhouette, p.fine.mean_accuracy});
            per_seed << " [seed " << seed << " beta " << beta << ": sil " << fixed(p.silhouette, 4) << ", acc "
                     << fixed(p.fine.mean_accuracy) << "]";
            spdlog::info("probe seed {} beta {}: silhouette {:.4f}, fine accuracy {:.2f}", seed, beta, p.silhouette,
                         p.fine.mean_accuracy);
        }
    }
    auto avg = [](const std::vector<Row>& v, double Row::*f) {
        double s = 0.0;
        for (const auto& r : v) s += r.*f;
        return s / static_cast<double>(v.size());
    };
    const double sil_base = avg(rows[0.0], &Row::sil), sil_vlcl = avg(rows[cfg.train.beta], &Row::sil);
    const double acc_base = avg(rows[0.0], &Row::acc), acc_vlcl = avg(rows[cfg.train.beta], &Row::acc);
    const bool a = sil_vlcl > sil_base, b = acc_vlcl - acc_base >= 2.0;
    return {a && b, "silhouette " + fixed(sil_vlcl, 4) + " vs " + fixed(sil_base, 4) + ", fine accuracy " +
                        fixed(acc_vlcl) + " vs " + fixed(acc_base) + "% (beta " + fixed(cfg.train.beta, 1) +
                        " vs 0, mean of 3 seeds);" + per_seed.str()};
}

Outcome beta_sweep(const std::filesystem::path& out_dir) {
    auto cfg = config::desk_preset();
    cfg.train.epochs = 2;
    cfg.train.iterations_per_epoch = 100;
    cfg.train.milestones.clear();
    const std::vector<double> betas{0.5, 1.0, 2.0, 5.0};
    const auto train = cfg.train_data.load();
    const auto test = cfg.test_data.load();
    const auto probe = cfg.probe_data->load();
    const auto rows =
        evaluation::beta_sweep(cfg.model, cfg.train, betas, {&train, &test, &probe}, cfg.eval, cfg.probe_eval);
    std::cout << evaluation::format_sweep(rows);
    const auto csv = out_dir / "sweep.csv";
    evaluation::write_sweep_csv(csv, rows);
    bool ok = rows.size() == betas.size() && std::filesystem::exists(csv);
    for (std::size_t i = 0; ok && i < rows.size(); ++i)
        ok = rows[i].beta == betas[i] && rows[i].report.n_episodes == cfg.eval.episodes &&
             std::isfinite(rows[i].report.mean_accuracy) && std::isfinite(rows[i].probe.silhouette);
    return {ok, std::to_string(rows.size()) + " rows, table written to " + csv.string()};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance checks"};
    std::vector<int> selected;
    std::string out_dir = (std::filesystem::temp_directory_path() / "vlcl_acceptance").string();
    std::string log_level = "warn";
    app.add_option("--criteria", selected, "Criteria to run (default: all)")->delimiter(',')->check(CLI::Range(1, 9));
    app.add_option("--out", out_dir, "Directory for generated tables");
    app.add_option("--log-level", log_level, "spdlog level");
    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(spdlog::level::from_str(log_level));

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"bilinear sampler gradcheck", bilinear_gradcheck},
        {"affine identity", affine_identity},
        {"loss oracles", loss_oracles},
        {"momentum and queue invariants", momentum_and_queue},
        {"second-order meta-gradient", second_order},
        {"beta = 0 reduces to prototypical network", baseline_reduction},
        {"desk-scale learning", desk_learning},
        {"direction of effect on the fine probe", direction_of_effect},
        {"beta sweep harness", [&] { return beta_sweep(out_dir); }},
    };
    if (selected.empty()) {
        selected.resize(criteria.size());
        std::iota(selected.begin(), selected.end(), 1);
    }

    int failures = 0;
    for (int id : std::set<int>(selected.begin(), selected.end())) {
        const auto& [name, run] = criteria.at(static_cast<std::size_t>(id - 1));
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = run();
        } catch (const std::exception& e) {
            o = {false, std::string("error: ") + e.what()};
        }
        failures += o.passed ? 0 : 1;
        std::cout << (o.passed ? "PASS" : "FAIL") << "  criterion " << id << " (" << name << ", "
                  << fixed(seconds_since(t0), 1) << " s): " << o.detail << std::endl;
    }
    return failures == 0 ? 0 : 1;
}
