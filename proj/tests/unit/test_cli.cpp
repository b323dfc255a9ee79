#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "protoseg/io/config_io.hpp"
#include "protoseg/io/nifti.hpp"

namespace fs = std::filesystem;
using namespace protoseg;

namespace {

struct Result {
  int code = -1;
  std::string output;
};

// Runs the CLI with stdout and stderr captured together.
Result run(const std::string& args) {
  const fs::path log = fs::temp_directory_path() / "protoseg_cli_output.txt";
  const std::string cmd = std::string(PROTOSEG_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, ss.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

class Cli : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root = fs::temp_directory_path() / "protoseg_cli";
    fs::remove_all(root);
    fs::create_directories(root);
    const Result r = run("gen-phantoms --count 2 --size 16 --seed 7 --out " + (root / "data").string());
    ASSERT_EQ(r.code, 0) << r.output;
  }
  static fs::path root;
};

fs::path Cli::root;

}  // namespace

TEST_F(Cli, GenPhantomsLayoutAndDeterminism) {
  std::size_t dirs = 0;
  for (const auto& e : fs::directory_iterator(root / "data")) {
    if (!e.is_directory()) continue;
    ++dirs;
    std::size_t files = 0;
    for (const auto& f : fs::directory_iterator(e.path())) files += f.path().string().ends_with(".nii.gz");
    EXPECT_EQ(files, 5u) << e.path();
  }
  EXPECT_EQ(dirs, 2u);
  EXPECT_TRUE(fs::exists(root / "data" / "manifest.txt"));
  EXPECT_TRUE(fs::exists(root / "data" / "run_manifest.json"));

  ASSERT_EQ(run("gen-phantoms --count 2 --size 16 --seed 7 --out " + (root / "again").string()).code, 0);
  for (const char* f : {"phantom_000/phantom_000_flair.nii.gz", "phantom_001/phantom_001_seg.nii.gz"})
    EXPECT_EQ(slurp(root / "data" / f), slurp(root / "again" / f)) << f;

  const Result odd = run("gen-phantoms --count 1 --size 30 --out " + (root / "odd").string());
  EXPECT_EQ(odd.code, 0);
  EXPECT_NE(odd.output.find("warning"), std::string::npos) << odd.output;
}

TEST_F(Cli, UsageAndDataErrors) {
  EXPECT_EQ(run("").code, 1);
  EXPECT_EQ(run("train --out x").code, 1);
  EXPECT_EQ(run("frobnicate").code, 1);
  const Result missing = run("evaluate --identity --data " + (root / "nowhere").string() + " --out " +
                             (root / "ev_missing").string());
  EXPECT_EQ(missing.code, 2);
  EXPECT_NE(missing.output.find("error: "), std::string::npos);
}

TEST_F(Cli, EvaluateIdentity) {
  const fs::path out = root / "ev";
  const Result r = run("evaluate --identity --data " + (root / "data").string() + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.output;
  EXPECT_EQ(count_lines(out / "report.csv"), 1u + 2u * 3u + 3u);
  std::ifstream csv(out / "report.csv");
  std::string line;
  std::getline(csv, line);
  while (std::getline(csv, line)) {
    if (line.find(",TC,") == std::string::npos && line.find(",WT,") == std::string::npos &&
        line.find(",ET,") == std::string::npos)
      continue;
    EXPECT_TRUE(line.ends_with(",1,0")) << line;
  }
  const auto j = io::read_json_file(out / "report.json");
  EXPECT_EQ(j["mean"]["ET"]["dice"], 1.0);
  EXPECT_EQ(io::read_json_file(out / "run_manifest.json")["status"], "completed");
}

TEST_F(Cli, TrainDryRunSegmentAndPlot) {
  const std::string data = (root / "data").string();
  const Result dry = run("train --dry-run --data " + data + " --out " + (root / "dry").string() +
                         " --crop 16 --base-channels 1");
  ASSERT_EQ(dry.code, 0) << dry.output;
  EXPECT_NE(dry.output.find("L_total="), std::string::npos);
  EXPECT_NE(dry.output.find("decoder.seg.output"), std::string::npos);

  const fs::path run_dir = root / "run";
  const Result tr = run("train --data " + data + " --out " + run_dir.string() +
                        " --crop 16 --base-channels 1 --epochs 2 --seed 3");
  ASSERT_EQ(tr.code, 0) << tr.output;
  EXPECT_EQ(count_lines(run_dir / "train_log.jsonl"), 4u);
  const fs::path ckpt = run_dir / "checkpoints" / "final.ckpt";
  ASSERT_TRUE(fs::exists(ckpt));
  EXPECT_TRUE(fs::exists(run_dir / "checkpoints" / "best.ckpt"));
  EXPECT_EQ(io::read_json_file(run_dir / "run_manifest.json")["config"]["train"]["seed"], 3);

  const fs::path seg = root / "seg";
  const Result sg = run("segment --data " + data + " --checkpoint " + ckpt.string() + " --out " + seg.string());
  ASSERT_EQ(sg.code, 0) << sg.output;
  const auto v = io::read_nifti(seg / "phantom_000.nii.gz");
  EXPECT_EQ(v.dims, (Dims3{16, 16, 16}));
  for (double x : v.voxels) EXPECT_TRUE(x == 0 || x == 1 || x == 2 || x == 4) << x;

  const fs::path ev = root / "ev_pred";
  const Result e = run("evaluate --predictions " + seg.string() + " --data " + data + " --out " + ev.string());
  ASSERT_EQ(e.code, 0) << e.output;
  EXPECT_EQ(count_lines(ev / "report.csv"), 10u);

  const Result mismatch = run("segment --data " + data + " --checkpoint " + ckpt.string() + " --out " +
                              (root / "seg2").string() + " --set model.base_channels=2");
  EXPECT_EQ(mismatch.code, 2);
  EXPECT_NE(mismatch.output.find("ConfigMismatch"), std::string::npos) << mismatch.output;

  const fs::path plots = root / "plots";
  const Result pl = run("plot-slices --case " + (root / "data" / "phantom_000").string() + " --out " + plots.string() +
                        " --activations --checkpoint " + ckpt.string());
  ASSERT_EQ(pl.code, 0) << pl.output;
  std::size_t planes = 0, heatmaps = 0;
  for (const auto& f : fs::directory_iterator(plots)) {
    const std::string name = f.path().filename().string();
    if (!name.ends_with(".png")) continue;
    (name.find("_activation_") != std::string::npos ? heatmaps : planes)++;
  }
  EXPECT_EQ(planes, 3u);
  EXPECT_EQ(heatmaps, 12u);
}

TEST_F(Cli, VerifyFilteringAndFaultInjection) {
  const Result ok = run("verify --suite metrics --out " + (root / "verify").string());
  EXPECT_EQ(ok.code, 0) << ok.output;
  EXPECT_EQ(ok.output.find("gradient/"), std::string::npos);
  EXPECT_NE(ok.output.find("PASS metrics/"), std::string::npos);

  const Result bad = run("verify --suite gradient --inject-fault cross_attend --out " + (root / "verify").string());
  EXPECT_EQ(bad.code, 3);
  EXPECT_NE(bad.output.find("FAIL gradient/cross_attend"), std::string::npos) << bad.output;
  EXPECT_EQ(run("verify --suite nonsense --out " + (root / "verify").string()).code, 1);
}
