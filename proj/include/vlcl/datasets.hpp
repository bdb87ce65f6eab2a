#pragma once

// Image datasets, the synthetic fine-grained generator, class merging and
// episodic N-way K-shot sampling.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "vlcl/tensor.hpp"

namespace vlcl::datasets {

/// Channel-last float images in [0, 1] with integer class labels. Each image
/// also carries a fine label (sub-category); for datasets without a finer
/// structure the fine label equals the class label.
struct Dataset {
    std::size_t height = 0;
    std::size_t width = 0;
    std::size_t channels = 0;
    std::vector<double> pixels;  // size() x height x width x channels
    std::vector<int> labels;
    std::vector<std::string> class_names;
    std::vector<int> fine_labels;
    std::vector<std::string> fine_names;

    std::size_t size() const { return labels.size(); }
    std::size_t num_classes() const { return class_names.size(); }
    std::size_t image_numel() const { return height * width * channels; }

    /// Throws vlcl::DataError on inconsistent sizes or out-of-range labels.
    void validate() const;

    /// Image indices grouped by class, ascending within each class.
    std::vector<std::vector<std::size_t>> indices_by_class() const;

    /// Gathers the listed images into a constant batch x h x w x c tensor.
    ag::Tensor batch(std::span<const std::size_t> indices) const;

    /// Keeps the listed classes (in the given order) and relabels them
    /// 0..classes.size()-1. Fine labels and names are kept unchanged.
    Dataset select_classes(std::span<const int> classes) const;

    /// Same images with the fine labels promoted to class labels.
    Dataset fine_as_classes() const;
};

struct Episode {
    ag::Tensor support_images;  // n_way*k_shot images, grouped by local label
    std::vector<int> support_labels;
    ag::Tensor query_images;  // n_way*queries_per_class images, grouped by local label
    std::vector<int> query_labels;
    std::vector<int> class_map;  // local label -> dataset class id
    std::vector<std::size_t> support_indices;
    std::vector<std::size_t> query_indices;

    std::size_t n_way() const { return class_map.size(); }
};

/// Draws n_way distinct classes, then k_shot + queries_per_class distinct
/// images from each. Throws vlcl::DataError with the offending counts when the
/// dataset is too small.
Episode sample_episode(const Dataset& d, std::size_t n_way, std::size_t k_shot,
                       std::size_t queries_per_class, std::mt19937_64& rng);

struct SyntheticSpec {
    std::size_t num_coarse_classes = 5;
    std::size_t subcats_per_class = 3;
    std::size_t samples_per_subcat = 20;
    std::size_t image_size = 32;
    double noise_std = 0.03;
    // Width of the per-image foreground hue draw around the sub-category hue;
    // 1 makes foreground colour carry no information at all.
    double hue_jitter = 0.08;
    std::uint64_t seed = 7;
    // Coarse class ids start here, so disjoint ranges give disjoint class sets
    // that share one generator.
    std::size_t first_class = 0;

    void validate() const;
};

/// Coarse class = silhouette shape and texture family (stripes, checker, dots,
/// rings); sub-category = foreground hue plus texture orientation or period.
/// Pose, texture phase, background, saturation and pixel noise are drawn per
/// image from `seed`; class appearance depends only on the class and
/// sub-category ids.
Dataset generate_synthetic(const SyntheticSpec& spec);

/// Relabels the listed classes as one class named `new_name`, placed at the
/// smallest listed id; the remaining classes are re-indexed densely in order.
/// Fine labels are left as they were. Throws vlcl::DataError on an unknown,
/// repeated or empty id list.
Dataset merge_classes(const Dataset& d, std::span<const int> ids, const std::string& new_name);

/// One sub-directory per class (labels by sorted name); PNG, JPEG and binary
/// PPM files are decoded, resized to `image_size` squared RGB and scaled to
/// [0, 1]. Undecodable files are skipped with a warning.
Dataset load_image_folder(const std::filesystem::path& root, std::size_t image_size);

/// Writes one h x w x c image (c = 1 or 3, values clipped to [0, 1]) as PNG.
void write_png(const std::filesystem::path& path, std::span<const double> pixels, std::size_t height,
               std::size_t width, std::size_t channels);

/// Bilinear resize of an h x w x c image with half-pixel centres.
std::vector<double> resize_image(std::span<const double> pixels, std::size_t height, std::size_t width,
                                 std::size_t channels, std::size_t out_h, std::size_t out_w);

}  // namespace vlcl::datasets
