#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>
#include <regex>
#include <string>

#include "vlcl/autoview.hpp"
#include "vlcl/checkpoint.hpp"
#include "vlcl/config.hpp"
#include "vlcl/datasets.hpp"
#include "vlcl/error.hpp"
#include "vlcl/evaluation.hpp"
#include "vlcl/gradcheck.hpp"
#include "vlcl/trainer.hpp"

namespace fs = std::filesystem;
using namespace vlcl;

namespace {

struct Common {
    std::string config_path;
    std::string preset = "desk";
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::string log_level = "info";
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--preset", c.preset, "Base settings when no --config is given")
        ->check(CLI::IsMember({"desk", "paper"}));
    cmd->add_option("--out", c.out_dir, "Output directory (overrides output_dir)");
    cmd->add_option("--seed", c.seed, "Training seed (overrides train.seed)");
    cmd->add_option("--log-level", c.log_level, "trace, debug, info, warn, error or off")
        ->check(CLI::IsMember({"trace", "debug", "info", "warn", "error", "off"}));
}

config::RunConfig resolve(const Common& c) {
    config::RunConfig cfg = c.config_path.empty() ? config::preset(c.preset) : config::load(c.config_path);
    if (!c.out_dir.empty()) cfg.output_dir = c.out_dir;
    if (c.seed) cfg.train.seed = *c.seed;
    cfg.validate();
    return cfg;
}

// "last" -> highest checkpoints/epoch_<n> under the output directory.
fs::path resolve_checkpoint(const std::string& spec, const config::RunConfig& cfg) {
    if (spec != "last") {
        if (!fs::exists(spec)) throw ConfigError("checkpoint '" + spec + "' does not exist");
        return spec;
    }
    const fs::path dir = cfg.output_dir / "checkpoints";
    if (!fs::is_directory(dir)) throw ConfigError("no checkpoints under " + dir.string());
    static const std::regex pattern(R"(epoch_(\d+))");
    std::optional<std::pair<long, fs::path>> best;
    for (const auto& entry : fs::directory_iterator(dir)) {
        std::smatch m;
        const std::string name = entry.path().filename().string();
        if (!std::regex_match(name, m, pattern)) continue;
        const long epoch = std::stol(m[1]);
        if (!best || epoch > best->first) best = {epoch, entry.path()};
    }
    if (!best) throw ConfigError("no checkpoints under " + dir.string());
    return best->second;
}

trainer::TrainState load_checkpoint(const std::string& spec, const config::RunConfig& cfg) {
    const fs::path path = resolve_checkpoint(spec, cfg);
    spdlog::info("loading {}", path.string());
    return trainer::load_state(checkpoint::Archive::load(path), cfg.model, cfg.train);
}

datasets::Dataset split_data(const config::RunConfig& cfg, const std::string& split) {
    if (split == "train") return cfg.train_data.load();
    if (split == "test") return cfg.test_data.load();
    if (!cfg.probe_data) throw ConfigError("the configuration has no probe data");
    return cfg.probe_data->load();
}

int run_train(const Common& c, std::optional<std::size_t> epochs, std::optional<double> beta,
              const std::string& resume) {
    config::RunConfig cfg = resolve(c);
    if (epochs) cfg.train.epochs = *epochs;
    if (beta) cfg.train.beta = *beta;
    cfg.validate();
    fs::create_directories(cfg.output_dir);
    config::save(cfg, cfg.output_dir / "config.json");

    const auto data = cfg.train_data.load();
    spdlog::info("training on {} images, {} classes, beta = {}", data.size(), data.num_classes(), cfg.train.beta);
    trainer::TrainOptions opts;
    opts.out_dir = cfg.output_dir;
    opts.config_text = config::to_json(cfg);
    if (!resume.empty()) opts.resume_from = resolve_checkpoint(resume, cfg);
    opts.on_step = [&](const trainer::StepRecord& r) {
        if ((r.iteration + 1) % cfg.train.iterations_per_epoch == 0) {
            spdlog::info("epoch {} done: meta {:.4f} con {:.4f} total {:.4f} lr {}", r.epoch + 1, r.meta_loss,
                         r.con_loss, r.total_loss, r.lr);
        }
    };
    trainer::train(cfg.model, cfg.train, data, opts);
    spdlog::info("checkpoints and metrics.csv written to {}", cfg.output_dir.string());
    return 0;
}

int run_eval(const Common& c, const std::string& ckpt, const std::string& split, std::optional<std::size_t> episodes) {
    config::RunConfig cfg = resolve(c);
    if (episodes) cfg.eval.episodes = *episodes;
    const auto state = load_checkpoint(ckpt, cfg);
    const auto data = split_data(cfg, split);
    const auto train_names = split == "test" ? std::optional(cfg.train_data.load().class_names) : std::nullopt;
    const auto report =
        evaluation::evaluate(cfg.model, state.encoders.theta, data, cfg.eval, train_names ? &*train_names : nullptr);
    std::cout << format_report(report) << '\n';
    fs::create_directories(cfg.output_dir);
    evaluation::write_report_csv(cfg.output_dir / "eval_report.csv", report);
    if (split == "test" && cfg.probe_data) {
        const auto probe = cfg.probe_data->load();
        const auto p = evaluation::fine_probe(cfg.model, state.encoders.theta, probe, cfg.probe_eval);
        std::cout << "fine probe: silhouette " << p.silhouette << ", " << format_report(p.fine) << '\n';
    }
    return 0;
}

int run_sweep(const Common& c, std::vector<double> betas) {
    config::RunConfig cfg = resolve(c);
    if (!betas.empty()) cfg.sweep_betas = betas;
    const auto train = cfg.train_data.load();
    const auto test = cfg.test_data.load();
    const std::optional<datasets::Dataset> probe =
        cfg.probe_data ? std::optional(cfg.probe_data->load()) : std::nullopt;
    const auto rows = evaluation::beta_sweep(cfg.model, cfg.train, cfg.sweep_betas,
                                             {&train, &test, probe ? &*probe : nullptr}, cfg.eval, cfg.probe_eval);
    std::cout << evaluation::format_sweep(rows);
    evaluation::write_sweep_csv(cfg.output_dir / "sweep.csv", rows);
    return 0;
}

int run_export(const Common& c, const std::string& ckpt, const std::string& split, std::string output) {
    config::RunConfig cfg = resolve(c);
    const auto state = load_checkpoint(ckpt, cfg);
    const auto data = split_data(cfg, split);
    if (output.empty()) output = (cfg.output_dir / "embeddings.csv").string();
    evaluation::export_embeddings(cfg.model, state.encoders.theta, data, output);
    spdlog::info("{} rows written to {}", data.size(), output);
    return 0;
}

int run_dump_views(const Common& c, const std::string& ckpt, const std::string& split, std::size_t n) {
    config::RunConfig cfg = resolve(c);
    const auto state = load_checkpoint(ckpt, cfg);
    const auto data = split_data(cfg, split);
    n = std::min(n, data.size());
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i * data.size() / n;
    const auto images = data.batch(idx);
    std::mt19937_64 rng(cfg.train.seed);
    const auto views =
        autoview::make_views(cfg.model.views, cfg.model.view_mode, state.gamma1, state.gamma2, images,
                             autoview::AugmentConfig::disabled(), rng);
    const fs::path dir = cfg.output_dir / "views";
    fs::create_directories(dir);
    const std::size_t h = data.height, w = data.width, ch = data.channels, plane = h * w * ch;
    auto write = [&](const ag::Tensor& t, std::size_t i, const char* tag) {
        datasets::write_png(dir / (std::to_string(i) + "_" + tag + ".png"), t.values().subspan(i * plane, plane), h, w,
                            ch);
    };
    for (std::size_t i = 0; i < n; ++i) {
        write(images, i, "orig");
        write(views.first, i, "v1");
        write(views.second, i, "v2");
    }
    spdlog::info("{} view triplets written to {}", n, dir.string());
    return 0;
}

int run_gradcheck() {
    bool ok = true;
    for (const auto& r : gradcheck::run_all()) {
        std::cout << gradcheck::format(r) << '\n';
        ok = ok && r.passed();
    }
    std::cout << (ok ? "all gradient checks passed" : "gradient check FAILED") << '\n';
    return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"View-learnable contrastive few-shot learning"};
    app.require_subcommand(1);
    Common common;

    auto* train = app.add_subcommand("train", "Two-stage training; writes metrics.csv and checkpoints/");
    add_common(train, common);
    std::optional<std::size_t> epochs;
    std::optional<double> beta;
    std::string resume;
    train->add_option("--epochs", epochs, "Override train.epochs");
    train->add_option("--beta", beta, "Override train.beta");
    train->add_option("--resume", resume, "Checkpoint path or 'last'");

    std::string ckpt = "last";
    std::string split = "test";
    std::optional<std::size_t> episodes;
    auto* eval = app.add_subcommand("eval", "Few-shot evaluation of a checkpoint; writes eval_report.csv");
    add_common(eval, common);
    eval->add_option("--checkpoint", ckpt, "Checkpoint path or 'last'");
    eval->add_option("--split", split, "Dataset to evaluate on")->check(CLI::IsMember({"train", "test", "probe"}));
    eval->add_option("--episodes", episodes, "Override eval.episodes");

    std::vector<double> betas;
    auto* sweep = app.add_subcommand("sweep", "Train and evaluate once per beta; writes sweep.csv");
    add_common(sweep, common);
    sweep->add_option("--betas", betas, "Override sweep.betas");

    std::string output;
    auto* exp = app.add_subcommand("export-embeddings", "Features with coarse and fine labels as CSV");
    add_common(exp, common);
    exp->add_option("--checkpoint", ckpt, "Checkpoint path or 'last'");
    exp->add_option("--split", split, "Dataset to export")->check(CLI::IsMember({"train", "test", "probe"}));
    exp->add_option("--output", output, "CSV path (default <out>/embeddings.csv)");

    std::size_t n_views = 16;
    auto* dump = app.add_subcommand("dump-views", "Write original and both learned views as PNG");
    add_common(dump, common);
    dump->add_option("--checkpoint", ckpt, "Checkpoint path or 'last'");
    dump->add_option("--split", split, "Dataset to draw images from")->check(CLI::IsMember({"train", "test", "probe"}));
    dump->add_option("--n", n_views, "Number of images")->check(CLI::PositiveNumber);

    auto* grad = app.add_subcommand("gradcheck", "Run every finite-difference gradient check");

    auto* show = app.add_subcommand("print-config", "Print the resolved configuration as JSON");
    add_common(show, common);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        spdlog::set_level(spdlog::level::from_str(common.log_level));
        if (*train) return run_train(common, epochs, beta, resume);
        if (*eval) return run_eval(common, ckpt, split, episodes);
        if (*sweep) return run_sweep(common, betas);
        if (*exp) return run_export(common, ckpt, split, output);
        if (*dump) return run_dump_views(common, ckpt, split, n_views);
        if (*grad) return run_gradcheck();
        if (*show) {
            std::cout << config::to_json(resolve(common));
            return 0;
        }
    } catch (const ConfigError& e) {
        std::cerr << "configuration error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
