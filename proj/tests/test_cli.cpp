#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <fstream>

#include "nltmo/hdr_io.hpp"
#include "nltmo/scenes.hpp"
#include "support.hpp"

using namespace nltmo;

namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code = -1;
  std::string out;
};

CliResult run(const std::string& args) {
  const std::string cmd = std::string(NLTMO_CLI_PATH) + " " + args + " 2>/dev/null";
  CliResult r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

// Shared fixture: a tiny corpus and a trained bundle, built once.
class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = test::scratch_dir("cli");
    fs::create_directories(dir_ / "data");
    fs::create_directories(dir_ / "empty");
    ASSERT_EQ(run("synth --out-dir " + q(dir_ / "data") + " --count 2 --width 40 --height 32 --seed 3").code, 0);
    const std::string common = " --data " + q(dir_ / "data") + " --epochs 1 --crop-size 32 --seed 1";
    ASSERT_EQ(run("train tonemap" + common + " --out " + q(dir_ / "tm.ckpt")).code, 0);
    ASSERT_EQ(run("train fusion" + common + " --stack-k 3 --tonemap " + q(dir_ / "tm.ckpt") + " --out " +
                  q(dir_ / "bundle.ckpt"))
                  .code,
              0);
  }
  static fs::path dir_;
};

fs::path Cli::dir_;

}  // namespace

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run("").code, 64);
  EXPECT_EQ(run("frobnicate").code, 64);
  EXPECT_EQ(run("tonemap --no-such-flag x.hdr").code, 64);
  EXPECT_EQ(run("eval --metric psnr --ref a.hdr --test b.png").code, 64);
  EXPECT_EQ(run("--help").code, 0);
}

TEST_F(Cli, SynthWritesScenes) {
  const CliResult r = run("synth --out-dir " + q(dir_ / "synth") + " --count 2 --width 20 --height 16");
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(fs::exists(dir_ / "synth" / "scene_000000.hdr"));
  EXPECT_TRUE(fs::exists(dir_ / "synth" / "scene_000001.hdr"));
  const HdrImage img = load_hdr_file(dir_ / "synth" / "scene_000001.hdr");
  EXPECT_EQ(img.width, 20);
  EXPECT_EQ(img.height, 16);
}

TEST_F(Cli, TrainingWritesCheckpointManifestAndTrace) {
  EXPECT_TRUE(fs::exists(dir_ / "bundle.ckpt.txt"));
  std::ifstream trace(dir_ / "tm.ckpt.trace.csv");
  std::string header, row;
  std::getline(trace, header);
  std::getline(trace, row);
  EXPECT_EQ(header, "epoch,split,metric,value,lr");
  EXPECT_EQ(row.rfind("1,train,nlpd,", 0), 0u);
}

TEST_F(Cli, ToneMapIsDeterministic) {
  const fs::path in = dir_ / "data" / "scene_000003.hdr";
  const std::string base = "tonemap --checkpoint " + q(dir_ / "bundle.ckpt") + " --short-side 0 --k 3 " + q(in);
  const CliResult a = run(base + " -o " + q(dir_ / "a.png"));
  const CliResult b = run(base + " -o " + q(dir_ / "b.png"));
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  EXPECT_NE(a.out.find("width=40 height=32"), std::string::npos);
  EXPECT_EQ(read_file(dir_ / "a.png"), read_file(dir_ / "b.png"));
  const LdrImage png = load_png(read_file(dir_ / "a.png"));
  EXPECT_EQ(png.width, 40);
  EXPECT_EQ(png.channels, 3);
}

TEST_F(Cli, ErrorExitCodes) {
  // empty training directory: format error
  EXPECT_EQ(run("train tonemap --data " + q(dir_ / "empty") + " --out " + q(dir_ / "x.ckpt")).code, 2);

  // corrupt checkpoint
  std::ofstream(dir_ / "bad.ckpt") << "definitely not a model";
  EXPECT_EQ(run("tonemap --checkpoint " + q(dir_ / "bad.ckpt") + " " + q(dir_ / "data" / "scene_000003.hdr") +
                " -o " + q(dir_ / "c.png"))
                .code,
            3);
  // tone-mapping-only checkpoint where a bundle is needed
  EXPECT_EQ(run("tonemap --checkpoint " + q(dir_ / "tm.ckpt") + " " + q(dir_ / "data" / "scene_000003.hdr") +
                " -o " + q(dir_ / "c.png"))
                .code,
            3);

  // reference and test images of incompatible shape
  LdrImage small;
  small.width = 10;
  small.height = 30;
  small.channels = 1;
  small.values.assign(300, 0.5);
  write_file(dir_ / "small.png", save_png(small, true));
  EXPECT_EQ(run("eval --ref " + q(dir_ / "data" / "scene_000003.hdr") + " --test " + q(dir_ / "small.png")).code, 4);

  // constant scene cannot be calibrated
  HdrImage flat;
  flat.width = 16;
  flat.height = 16;
  flat.rgb.assign(16 * 16 * 3, 1.0f);
  write_file(dir_ / "flat.pfm", save_pfm(flat));
  EXPECT_EQ(run("nlpd-opt " + q(dir_ / "flat.pfm") + " -o " + q(dir_ / "flat.png")).code, 4);
}

TEST_F(Cli, NlpdOptZeroIterations) {
  const CliResult r = run("nlpd-opt " + q(dir_ / "data" / "scene_000003.hdr") + " --iters 0 -o " + q(dir_ / "o.png"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("iterations=0"), std::string::npos);
  EXPECT_TRUE(fs::exists(dir_ / "o.png"));
  std::ifstream trace(dir_ / "o.png.trace.csv");
  std::string header;
  std::getline(trace, header);
  EXPECT_EQ(header, "iter,loss,step");
}

TEST_F(Cli, EvalPrintsMetric) {
  const fs::path in = dir_ / "data" / "scene_000003.hdr";
  ASSERT_EQ(run("tonemap --checkpoint " + q(dir_ / "bundle.ckpt") + " --short-side 0 --k 3 " + q(in) + " -o " +
                q(dir_ / "e.png"))
                .code,
            0);
  const CliResult r = run("eval --ref " + q(in) + " --test " + q(dir_ / "e.png") + " --metric nlpd");
  ASSERT_EQ(r.code, 0);
  EXPECT_GT(std::stod(r.out), 0.0);
}
