#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>

namespace fs = std::filesystem;

namespace {

const fs::path kWork = fs::temp_directory_path() / "rose_test_cli";

int run(const std::string& args) {
  const std::string cmd = std::string(ROSE_CLI) + " " + args + " > " + (kWork / "stdout.txt").string() + " 2> " +
                          (kWork / "stderr.txt").string();
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p);
  return {std::istreambuf_iterator<char>(f), {}};
}

std::string out() { return slurp(kWork / "stdout.txt"); }
std::string err() { return slurp(kWork / "stderr.txt"); }

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
  }
  void TearDown() override { fs::remove_all(kWork); }

  fs::path write_config(const std::string& text) {
    const auto p = kWork / "tiny.cfg";
    std::ofstream(p) << text;
    return p;
  }
};

const char* kTiny =
    "height = 32\nwidth = 64\nd_max = 12\nbase_channels = 4\nfeature_channels = 8\n"
    "hidden = 8\ncontext = 4\nbatch = 2\niterations = 2\nval_scenes = 2\neval_batch = 2\n";

}  // namespace

TEST_F(Cli, HelpExitsZeroAndListsKeys) {
  EXPECT_EQ(run("--help"), 0);
  EXPECT_NE(out().find("pretrain"), std::string::npos);
  EXPECT_EQ(run("step1 --help"), 0);
  EXPECT_NE(out().find("lambda3"), std::string::npos);
}

TEST_F(Cli, UsageErrorsExitOne) {
  EXPECT_EQ(run(""), 1);
  EXPECT_EQ(run("frobnicate"), 1);
  EXPECT_EQ(run("pretrain"), 1);  // --out is required
  EXPECT_EQ(run("pretrain --out x --threads 0"), 1);
  EXPECT_EQ(run("sgm --out x --cost ncc"), 1);
  EXPECT_EQ(run("pretrain --out x --config /no/such/file.cfg"), 1);
}

TEST_F(Cli, RuntimeErrorsExitTwo) {
  const auto cfg = write_config(kTiny);
  EXPECT_EQ(run("pretrain --out " + (kWork / "a").string() + " --set bogus=1"), 2);
  EXPECT_NE(err().find("rose: error:"), std::string::npos);
  EXPECT_EQ(run("step1 --config " + cfg.string() + " --out " + (kWork / "b").string()), 2);  // no init
}

TEST_F(Cli, PretrainThenEvalAndManifestGuard) {
  const auto cfg = write_config(kTiny);
  const auto a = kWork / "a";
  ASSERT_EQ(run("pretrain --config " + cfg.string() + " --out " + a.string() + " --seed 3"), 0) << err();
  EXPECT_TRUE(fs::exists(a / "weights.ckpt"));
  EXPECT_NE(slurp(a / "config.txt").find("seed = 3"), std::string::npos);
  EXPECT_EQ(run("pretrain --config " + cfg.string() + " --out " + a.string()), 2);
  EXPECT_NE(err().find("--force"), std::string::npos);
  EXPECT_EQ(run("pretrain --config " + cfg.string() + " --out " + a.string() + " --force"), 0);

  const auto e = kWork / "e";
  ASSERT_EQ(run("eval --config " + cfg.string() + " --out " + e.string() + " --weights " + (a / "weights.ckpt").string() +
                " --set eval_variant=clear"),
            0)
      << err();
  EXPECT_EQ(slurp(e / "metrics.csv").substr(0, 9), "condition");
}

TEST_F(Cli, SgmAndGenerate) {
  const auto cfg = write_config(kTiny);
  ASSERT_EQ(run("sgm --config " + cfg.string() + " --out " + (kWork / "s").string() + " --cost sad --paths 4"), 0)
      << err();
  EXPECT_NE(slurp(kWork / "s" / "manifest.txt").find("sgm_cost = sad"), std::string::npos);
  ASSERT_EQ(run("generate --config " + cfg.string() + " --out " + (kWork / "g").string()), 0) << err();
  EXPECT_NE(slurp(kWork / "g" / "manifest.txt").find("samples = 8"), std::string::npos);
}
