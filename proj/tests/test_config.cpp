#include <gtest/gtest.h>

#include "vlcl/config.hpp"
#include "vlcl/error.hpp"

using namespace vlcl;

TEST(Config, PresetsValidate) {
    EXPECT_NO_THROW(config::desk_preset().validate());
    EXPECT_NO_THROW(config::paper_preset().validate());
    EXPECT_THROW(config::preset("laptop"), ConfigError);
}

TEST(Config, RoundTripIsLossless) {
    for (const auto& cfg : {config::desk_preset(), config::paper_preset()}) {
        const std::string text = config::to_json(cfg);
        const auto back = config::from_json(text);
        EXPECT_EQ(config::to_json(back), text);
    }
}

TEST(Config, EditedValuesSurviveRoundTrip) {
    auto cfg = config::desk_preset();
    cfg.train.beta = 3.25;
    cfg.train.milestones = {{2, 0.5}, {7, 0.05}};
    cfg.model.view_mode = autoview::ViewMode::random_crop;
    cfg.model.similarity = {protohead::SimilarityKind::cosine, 10.0};
    cfg.probe_data.reset();
    cfg.test_data.kind = config::DataSource::Kind::folder;
    cfg.test_data.folder = "/data/test";
    const auto back = config::from_json(config::to_json(cfg));
    EXPECT_EQ(back.train.beta, 3.25);
    EXPECT_EQ(back.train.milestones, cfg.train.milestones);
    EXPECT_EQ(back.model.view_mode, autoview::ViewMode::random_crop);
    EXPECT_EQ(back.model.similarity.kind, protohead::SimilarityKind::cosine);
    EXPECT_FALSE(back.probe_data.has_value());
    EXPECT_EQ(back.test_data.folder, "/data/test");
    EXPECT_EQ(config::to_json(back), config::to_json(cfg));
}

TEST(Config, PartialDocumentKeepsDefaults) {
    const auto cfg = config::from_json(R"({"train": {"beta": 1.5}})");
    EXPECT_EQ(cfg.train.beta, 1.5);
    EXPECT_EQ(cfg.train.lr, config::desk_preset().train.lr);
    const auto paper = config::from_json(R"({"preset": "paper", "train": {"epochs": 2}})");
    EXPECT_EQ(paper.model.encoder.feature_dim, 640u);
    EXPECT_EQ(paper.train.epochs, 2u);
}

TEST(Config, RejectsUnknownKeysWrongTypesAndBadValues) {
    EXPECT_THROW(config::from_json(R"({"trian": {}})"), ConfigError);
    EXPECT_THROW(config::from_json(R"({"train": {"betta": 1}})"), ConfigError);
    EXPECT_THROW(config::from_json(R"({"train": {"beta": "two"}})"), ConfigError);
    EXPECT_THROW(config::from_json(R"({"train": {"beta": -1}})"), ConfigError);
    EXPECT_THROW(config::from_json(R"({"model": {"contrast": {"reduction": "median"}}})"), ConfigError);
    EXPECT_THROW(config::from_json("{not json"), ConfigError);
    EXPECT_THROW(config::from_json(R"({"eval": {"episodes": 0}})"), ConfigError);
}

TEST(Config, RejectsMismatchedImageSizes) {
    auto cfg = config::desk_preset();
    cfg.model.views.image_size = 32;
    EXPECT_THROW(cfg.validate(), ConfigError);
    cfg = config::desk_preset();
    cfg.train_data.synthetic.image_size = 32;
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, SaveAndLoadFile) {
    const auto path = std::filesystem::temp_directory_path() / "vlcl_config_test.json";
    auto cfg = config::desk_preset();
    cfg.train.seed = 77;
    config::save(cfg, path);
    EXPECT_EQ(config::load(path).train.seed, 77u);
    std::filesystem::remove(path);
    EXPECT_THROW(config::load(path), ConfigError);
}
