#include <gtest/gtest.h>

#include <sstream>

#include "cli.hpp"
#include "fixtures.hpp"

using testing_support::TempDir;

namespace {

struct Outcome {
  int code;
  std::string out, err;
};

Outcome run_cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = aqtc::cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string p(const std::filesystem::path& path) { return path.string(); }

}  // namespace

TEST(Cli, ExitCodes) {
  EXPECT_EQ(run_cli({}).code, 1);
  EXPECT_EQ(run_cli({"frobnicate"}).code, 1);
  EXPECT_EQ(run_cli({"validate"}).code, 1);
  EXPECT_EQ(run_cli({"validate", "--data", "/nonexistent/manifest.json"}).code, 2);
  EXPECT_EQ(run_cli({"--help"}).code, 0);
}

TEST(Cli, SynthValidateTrainEvalPipeline) {
  TempDir dir;
  const auto data = p(dir / "data");
  ASSERT_EQ(run_cli({"synth", "--seed", "7", "--out", data, "--tasks", "2", "--d-v", "4", "--d-t", "4"}).code, 0);
  const auto manifest = p(dir / "data" / "manifest.json");
  const auto v = run_cli({"validate", "--data", manifest, "--out", p(dir / "v")});
  ASSERT_EQ(v.code, 0) << v.err;
  EXPECT_NE(v.out.find("ok tasks=2"), std::string::npos);

  EXPECT_EQ(run_cli({"train", "--data", manifest, "--out", p(dir / "c"), "--epochs", "0"}).code, 1);
  EXPECT_EQ(run_cli({"train", "--data", manifest, "--out", p(dir / "c"), "--bogus"}).code, 1);
  const auto t = run_cli({"train", "--data", manifest, "--out", p(dir / "c"), "--epochs", "3", "--d-gru", "4",
                          "--d-hidden", "8", "--lr", "1e-3"});
  ASSERT_EQ(t.code, 0) << t.err;
  for (const auto* f : {"best.fp", "best.fp.json", "last.fp", "history.csv", "run.json"}) {
    EXPECT_TRUE(std::filesystem::exists(dir / "c" / f)) << f;
  }
  const auto e = run_cli({"eval", "--ckpt", p(dir / "c" / "best.fp"), "--data", manifest, "--dump-ranks",
                          p(dir / "ranks.csv"), "--out", p(dir / "e")});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_NE(e.out.find("R@1="), std::string::npos);
  EXPECT_TRUE(std::filesystem::exists(dir / "ranks.csv"));

  // A checkpoint with mismatched dims is a validation error.
  const auto other = p(dir / "other");
  ASSERT_EQ(run_cli({"synth", "--seed", "1", "--out", other, "--tasks", "1", "--d-v", "5", "--d-t", "4"}).code, 0);
  EXPECT_EQ(run_cli({"eval", "--ckpt", p(dir / "c" / "best.fp"), "--data", p(dir / "other" / "manifest.json")}).code, 1);

  aqtc::write_text(dir / "ens.json", R"({"members":[{"checkpoint":"c/best.fp"},{"checkpoint":"c/last.fp"}]})");
  const auto en = run_cli({"ensemble", "--spec", p(dir / "ens.json"), "--data", manifest, "--out", p(dir / "en")});
  ASSERT_EQ(en.code, 0) << en.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "en" / "ensemble.csv"));

  const auto r = run_cli({"report", "--csv", p(dir / "c" / "history.csv"), "--out", p(dir / "rep")});
  ASSERT_EQ(r.code, 0) << r.err;
}

TEST(Cli, SynthAndTrainAreByteIdentical) {
  TempDir a, b;
  for (const auto* d : {&a, &b}) {
    ASSERT_EQ(run_cli({"synth", "--seed", "7", "--out", p(*d / "data")}).code, 0);
    ASSERT_EQ(run_cli({"train", "--data", p(*d / "data" / "manifest.json"), "--out", p(*d / "c"), "--epochs", "2",
                       "--d-gru", "4", "--d-hidden", "8", "--seed", "3"})
                  .code,
              0);
  }
  for (const auto* f : {"data/manifest.json", "data/task_0001.featpack", "data/run.json", "c/best.fp", "c/last.fp",
                        "c/history.csv"}) {
    EXPECT_EQ(aqtc::read_file_bytes(a / f), aqtc::read_file_bytes(b / f)) << f;
  }
}

TEST(Cli, AblateWritesTableAndChart) {
  TempDir dir;
  ASSERT_EQ(run_cli({"synth", "--seed", "2", "--out", p(dir / "data"), "--tasks", "2", "--d-v", "4", "--d-t", "4"}).code, 0);
  aqtc::write_text(dir / "grid.json", R"([{"use_hoi":true},{"use_hoi":false}])");
  const auto r = run_cli({"ablate", "--data", p(dir / "data" / "manifest.json"), "--grid", p(dir / "grid.json"),
                          "--out", p(dir / "table.csv"), "--epochs", "2", "--d-gru", "4", "--d-hidden", "8"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_TRUE(std::filesystem::exists(dir / "table.csv"));
  EXPECT_TRUE(std::filesystem::exists(dir / "table.svg"));
  aqtc::write_text(dir / "bad.json", R"([{"use_hoi":true,"temperature":-1}])");
  EXPECT_EQ(run_cli({"ablate", "--data", p(dir / "data" / "manifest.json"), "--grid", p(dir / "bad.json"), "--epochs",
                     "1"})
                .code,
            1);
}

TEST(Cli, ConfigOverlayBelowExplicitFlags) {
  TempDir dir;
  ASSERT_EQ(run_cli({"synth", "--seed", "2", "--out", p(dir / "data"), "--tasks", "1", "--d-v", "4", "--d-t", "4"}).code, 0);
  aqtc::write_text(dir / "cfg.json", R"({"epochs":4,"d-gru":4,"d-hidden":8})");
  const auto r = run_cli({"train", "--config", p(dir / "cfg.json"), "--data", p(dir / "data" / "manifest.json"),
                          "--out", p(dir / "c"), "--epochs", "2"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.out.find("epochs=2"), std::string::npos) << r.out;
  const auto ckpt = aqtc::load_checkpoint(dir / "c" / "best.fp");
  EXPECT_EQ(ckpt.scorer.d_gru, 4u);
  aqtc::write_text(dir / "bad.json", R"({"bogus":1})");
  EXPECT_EQ(run_cli({"train", "--config", p(dir / "bad.json"), "--data", p(dir / "data" / "manifest.json"), "--out",
                     p(dir / "c2")})
                .code,
            1);
}
