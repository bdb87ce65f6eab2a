#include <algorithm>
#include <numeric>
#include <set>
#include <string>

#include "vlcl/datasets.hpp"
#include "vlcl/error.hpp"

namespace vlcl::datasets {

void Dataset::validate() const {
    const std::size_t n = labels.size();
    if (height == 0 || width == 0 || channels == 0) throw DataError("dataset has an empty image shape");
    if (pixels.size() != n * image_numel()) {
        throw DataError("dataset holds " + std::to_string(pixels.size()) + " pixel values, expected " +
                        std::to_string(n * image_numel()));
    }
    if (fine_labels.size() != n) throw DataError("dataset fine labels do not match the image count");
    for (int y : labels)
        if (y < 0 || static_cast<std::size_t>(y) >= class_names.size())
            throw DataError("label " + std::to_string(y) + " outside [0, " + std::to_string(class_names.size()) + ")");
    for (int y : fine_labels)
        if (y < 0 || static_cast<std::size_t>(y) >= fine_names.size())
            throw DataError("fine label " + std::to_string(y) + " outside [0, " + std::to_string(fine_names.size()) + ")");
}

std::vector<std::vector<std::size_t>> Dataset::indices_by_class() const {
    std::vector<std::vector<std::size_t>> out(num_classes());
    for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i]].push_back(i);
    return out;
}

ag::Tensor Dataset::batch(std::span<const std::size_t> indices) const {
    const std::size_t plane = image_numel();
    std::vector<double> v(indices.size() * plane);
    for (std::size_t j = 0; j < indices.size(); ++j) {
        if (indices[j] >= size()) throw std::out_of_range("image index " + std::to_string(indices[j]) + " out of range");
        std::copy_n(pixels.begin() + indices[j] * plane, plane, v.begin() + j * plane);
    }
    return ag::Tensor::constant({indices.size(), height, width, channels}, std::move(v));
}

Dataset Dataset::select_classes(std::span<const int> classes) const {
    std::vector<int> remap(num_classes(), -1);
    Dataset out;
    out.height = height;
    out.width = width;
    out.channels = channels;
    out.fine_names = fine_names;
    for (std::size_t j = 0; j < classes.size(); ++j) {
        const int c = classes[j];
        if (c < 0 || static_cast<std::size_t>(c) >= num_classes() || remap[c] != -1) {
            throw DataError("select_classes: invalid or repeated class id " + std::to_string(c));
        }
        remap[c] = static_cast<int>(j);
        out.class_names.push_back(class_names[c]);
    }
    const std::size_t plane = image_numel();
    for (std::size_t i = 0; i < size(); ++i) {
        if (remap[labels[i]] < 0) continue;
        out.labels.push_back(remap[labels[i]]);
        out.fine_labels.push_back(fine_labels[i]);
        out.pixels.insert(out.pixels.end(), pixels.begin() + i * plane, pixels.begin() + (i + 1) * plane);
    }
    return out;
}

Dataset Dataset::fine_as_classes() const {
    Dataset out = *this;
    out.labels = fine_labels;
    out.class_names = fine_names;
    return out;
}

Episode sample_episode(const Dataset& d, std::size_t n_way, std::size_t k_shot,
                       std::size_t queries_per_class, std::mt19937_64& rng) {
    if (n_way == 0 || k_shot == 0) throw DataError("episode needs n_way >= 1 and k_shot >= 1");
    if (d.num_classes() < n_way) {
        throw DataError("episode needs " + std::to_string(n_way) + " classes, dataset has " +
                        std::to_string(d.num_classes()));
    }
    const auto by_class = d.indices_by_class();
    const std::size_t per_class = k_shot + queries_per_class;

    std::vector<int> classes(d.num_classes());
    std::iota(classes.begin(), classes.end(), 0);
    for (std::size_t i = 0; i < n_way; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, classes.size() - 1);
        std::swap(classes[i], classes[pick(rng)]);
    }
    classes.resize(n_way);

    Episode ep;
    ep.class_map = classes;
    std::vector<std::vector<std::size_t>> chosen(n_way);
    for (std::size_t c = 0; c < n_way; ++c) {
        std::vector<std::size_t> pool = by_class[classes[c]];
        if (pool.size() < per_class) {
            throw DataError("class '" + d.class_names[classes[c]] + "' has " + std::to_string(pool.size()) +
                            " images, episode needs " + std::to_string(per_class) + " (" +
                            std::to_string(k_shot) + " support + " + std::to_string(queries_per_class) + " query)");
        }
        for (std::size_t i = 0; i < per_class; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
            std::swap(pool[i], pool[pick(rng)]);
        }
        pool.resize(per_class);
        chosen[c] = std::move(pool);
    }
    for (std::size_t c = 0; c < n_way; ++c) {
        for (std::size_t i = 0; i < k_shot; ++i) {
            ep.support_indices.push_back(chosen[c][i]);
            ep.support_labels.push_back(static_cast<int>(c));
        }
    }
    for (std::size_t c = 0; c < n_way; ++c) {
        for (std::size_t i = k_shot; i < per_class; ++i) {
            ep.query_indices.push_back(chosen[c][i]);
            ep.query_labels.push_back(static_cast<int>(c));
        }
    }
    ep.support_images = d.batch(ep.support_indices);
    ep.query_images = d.batch(ep.query_indices);
    return ep;
}

Dataset merge_classes(const Dataset& d, std::span<const int> ids, const std::string& new_name) {
    if (ids.empty()) throw DataError("merge_classes: empty class list");
    std::set<int> merged;
    for (int c : ids) {
        if (c < 0 || static_cast<std::size_t>(c) >= d.num_classes()) {
            throw DataError("merge_classes: unknown class id " + std::to_string(c));
        }
        if (!merged.insert(c).second) throw DataError("merge_classes: class id " + std::to_string(c) + " listed twice");
    }
    const int target = *merged.begin();
    std::vector<int> remap(d.num_classes(), -1);
    Dataset out = d;
    out.class_names.clear();
    for (std::size_t c = 0; c < d.num_classes(); ++c) {
        const int ci = static_cast<int>(c);
        if (merged.count(ci) && ci != target) continue;
        remap[c] = static_cast<int>(out.class_names.size());
        out.class_names.push_back(ci == target ? new_name : d.class_names[c]);
    }
    for (int c : merged) remap[c] = remap[target];
    for (auto& y : out.labels) y = remap[y];
    return out;
}

}  // namespace vlcl::datasets
