#pragma once

#include "vlcl/datasets.hpp"
#include "vlcl/trainer.hpp"

namespace vlcl::tiny {

// 16 px images, two conv blocks, 8-d features; small enough for exact checks.
inline trainer::ModelConfig model() {
    trainer::ModelConfig m;
    m.encoder.conv_channels = {6, 8};
    m.encoder.feature_dim = 8;
    m.encoder.proj_hidden = 16;
    m.encoder.proj_dim = 8;
    m.encoder.image_size = 16;
    m.views.conv_channels = {4, 4};
    m.views.image_size = 16;
    m.contrast.queue_capacity = 32;
    m.contrast.reduction = contrast::Reduction::mean;
    return m;
}

inline trainer::TrainConfig train() {
    trainer::TrainConfig t;
    t.beta = 1.0;
    t.lr = 0.05;
    t.milestones.clear();
    t.eta = 1e-2;
    t.epsilon = 0.9;
    t.epochs = 2;
    t.iterations_per_epoch = 3;
    t.n_way = 3;
    t.k_shot = 1;
    t.queries_per_class = 2;
    t.seed = 5;
    return t;
}

inline datasets::Dataset data(std::uint64_t seed = 3) {
    datasets::SyntheticSpec s;
    s.num_coarse_classes = 4;
    s.subcats_per_class = 2;
    s.samples_per_subcat = 3;
    s.image_size = 16;
    s.seed = seed;
    return datasets::generate_synthetic(s);
}

}  // namespace vlcl::tiny
