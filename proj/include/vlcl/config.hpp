#pragma once

// Run configuration: JSON in, JSON out. Unknown keys are rejected so a typo
// never silently falls back to a default.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vlcl/datasets.hpp"
#include "vlcl/evaluation.hpp"
#include "vlcl/trainer.hpp"

namespace vlcl::config {

/// Either a synthetic generator spec or an image-folder root.
struct DataSource {
    enum class Kind { synthetic, folder };
    Kind kind = Kind::synthetic;
    datasets::SyntheticSpec synthetic;
    std::filesystem::path folder;
    std::size_t image_size = 16;  // folder images are resized to this

    datasets::Dataset load() const;
};

struct RunConfig {
    trainer::ModelConfig model;
    trainer::TrainConfig train;
    evaluation::EvalSettings eval;
    evaluation::EvalSettings probe_eval;
    std::vector<double> sweep_betas{0.5, 1.0, 2.0, 5.0};
    DataSource train_data;
    DataSource test_data;
    std::optional<DataSource> probe_data;
    std::filesystem::path output_dir = "runs/vlcl";

    /// Validates every section and the cross-section size agreements.
    void validate() const;
};

/// Small CPU run on synthetic data: 16 px images, four-block conv encoder.
RunConfig desk_preset();
/// Paper-sized settings (80 px, 640-d features, 63000-key queue, 4 tasks per
/// batch, 60 epochs). Data paths point at an image-folder layout.
RunConfig paper_preset();
/// "desk" or "paper"; throws vlcl::ConfigError otherwise.
RunConfig preset(const std::string& name);

std::string to_json(const RunConfig& cfg);
/// Missing keys keep the desk defaults. Throws vlcl::ConfigError on unknown
/// keys, wrong types or invalid values.
RunConfig from_json(const std::string& text);
RunConfig load(const std::filesystem::path& path);
void save(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace vlcl::config
