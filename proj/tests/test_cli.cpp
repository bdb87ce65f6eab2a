#include <gtest/gtest.h>
#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
    const std::string cmd = std::string(VLCL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir = fs::temp_directory_path() / "vlcl_cli_test";
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    void TearDown() override { fs::remove_all(dir); }

    // Three-iteration run on 16 px data.
    fs::path write_tiny_config() {
        const fs::path path = dir / "tiny.json";
        std::ofstream(path) << R"({
  "model": {
    "encoder": {"conv_channels": [4, 8], "feature_dim": 8, "proj_hidden": 8, "proj_dim": 8, "image_size": 16},
    "views": {"conv_channels": [4], "image_size": 16},
    "contrast": {"queue_capacity": 16}
  },
  "train": {"epochs": 1, "iterations_per_epoch": 3, "n_way": 3, "queries_per_class": 2},
  "eval": {"n_way": 3, "queries_per_class": 2, "episodes": 5},
  "probe_eval": {"n_way": 2, "queries_per_class": 1, "episodes": 5},
  "data": {
    "train": {"kind": "synthetic", "num_coarse_classes": 4, "subcats_per_class": 2, "samples_per_subcat": 3, "image_size": 16},
    "test": {"kind": "synthetic", "num_coarse_classes": 3, "subcats_per_class": 2, "samples_per_subcat": 3, "image_size": 16, "first_class": 4},
    "probe": {"kind": "synthetic", "num_coarse_classes": 4, "subcats_per_class": 2, "samples_per_subcat": 3, "image_size": 16, "seed": 5}
  }
})";
        return path;
    }

    fs::path dir;
};

}  // namespace

TEST_F(Cli, UsageErrorsExitWithTwo) {
    EXPECT_EQ(run(""), 2);
    EXPECT_EQ(run("frobnicate"), 2);
    EXPECT_EQ(run("train --epochs notanumber"), 2);
    EXPECT_EQ(run("print-config --preset laptop"), 2);
}

TEST_F(Cli, BadConfigExitsWithTwo) {
    const fs::path bad = dir / "bad.json";
    std::ofstream(bad) << R"({"train": {"beta": -3}})";
    EXPECT_EQ(run("print-config --config " + bad.string()), 2);
    std::ofstream(bad) << R"({"unknown": 1})";
    EXPECT_EQ(run("print-config --config " + bad.string()), 2);
    EXPECT_EQ(run("eval --out " + (dir / "nothing").string()), 2);
}

TEST_F(Cli, RuntimeErrorExitsWithOne) {
    // More classes per episode than the dataset holds.
    const fs::path cfg = dir / "big_way.json";
    std::ofstream(cfg) << R"({
  "model": {
    "encoder": {"conv_channels": [4, 8], "feature_dim": 8, "proj_hidden": 8, "proj_dim": 8, "image_size": 16},
    "views": {"conv_channels": [4], "image_size": 16}
  },
  "train": {"epochs": 1, "iterations_per_epoch": 1, "n_way": 9},
  "data": {
    "train": {"kind": "synthetic", "num_coarse_classes": 4, "image_size": 16},
    "test": {"kind": "synthetic", "num_coarse_classes": 3, "image_size": 16, "first_class": 4},
    "probe": null
  }
})";
    EXPECT_EQ(run("train --config " + cfg.string() + " --out " + dir.string()), 1);
}

TEST_F(Cli, TrainEvalExportAndDumpViews) {
    const auto cfg = write_tiny_config().string();
    const auto out = (dir / "run").string();
    ASSERT_EQ(run("train --config " + cfg + " --out " + out + " --seed 3"), 0);
    EXPECT_TRUE(fs::exists(dir / "run" / "metrics.csv"));
    EXPECT_TRUE(fs::exists(dir / "run" / "checkpoints" / "epoch_1"));
    EXPECT_TRUE(fs::exists(dir / "run" / "config.json"));

    ASSERT_EQ(run("eval --config " + cfg + " --out " + out + " --checkpoint last"), 0);
    EXPECT_TRUE(fs::exists(dir / "run" / "eval_report.csv"));

    ASSERT_EQ(run("export-embeddings --config " + cfg + " --out " + out), 0);
    EXPECT_TRUE(fs::exists(dir / "run" / "embeddings.csv"));

    ASSERT_EQ(run("dump-views --config " + cfg + " --out " + out + " --n 2"), 0);
    for (const char* name : {"0_orig.png", "0_v1.png", "0_v2.png", "1_v2.png"})
        EXPECT_TRUE(fs::exists(dir / "run" / "views" / name)) << name;

    ASSERT_EQ(run("train --config " + cfg + " --out " + out + " --epochs 2 --resume last"), 0);
    EXPECT_TRUE(fs::exists(dir / "run" / "checkpoints" / "epoch_2"));
}

TEST_F(Cli, SeedOverridesConfig) {
    const auto cfg = write_tiny_config().string();
    const fs::path printed = dir / "printed.json";
    ASSERT_EQ(std::system((std::string(VLCL_CLI_PATH) + " print-config --config " + cfg + " --seed 1234 > " +
                           printed.string())
                              .c_str()),
              0);
    std::ifstream in(printed);
    const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    EXPECT_NE(text.find("\"seed\": 1234"), std::string::npos);
}
