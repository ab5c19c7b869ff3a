#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

namespace fs = std::filesystem;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

// Runs the CLI with stderr folded into stdout.
Result run(const std::string& args) {
  fs::path log = fs::temp_directory_path() / "evgrid_cli_test.log";
  std::string cmd = std::string(EVGRID_CLI) + " " + args + " > " + log.string() + " 2>&1";
  int status = std::system(cmd.c_str());
  Result r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  r.out = ss.str();
  return r;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("evgrid_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }

  fs::path dir_;
};

const char* kAllocate = R"({
  "network": {"line": {"r": [0.01, 0.005], "x": [0.01, 0.005]}, "k_spaces": 10},
  "classes": {"types": [{"law": {"kind": "exponential", "mean_b": 1, "mean_d": 1}, "c_max": null}],
              "lambda": 12, "weights": "fairness"},
  "model": "distflow",
  "run": {"state": [6.2, 6.2]}
})";

TEST_F(CliTest, NoSubcommandIsUsageError) { EXPECT_EQ(run("").code, 2); }

TEST_F(CliTest, UnknownSubcommandIsUsageError) { EXPECT_EQ(run("frobnicate").code, 2); }

TEST_F(CliTest, MissingConfigFileIsUsageError) {
  EXPECT_EQ(run("allocate --config " + (dir_ / "absent.json").string()).code, 2);
}

TEST_F(CliTest, UnknownFieldReportsPath) {
  std::string cfg = write("bad.json", R"({"network": {"line": {"r": [0.01], "x": [0.01], "colour": 1}}})");
  Result r = run("allocate --config " + cfg + " --out " + (dir_ / "o").string());
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.out.find("$.network.line.colour"), std::string::npos) << r.out;
}

TEST_F(CliTest, MalformedJsonIsInputError) {
  std::string cfg = write("broken.json", "{\"network\": ");
  EXPECT_EQ(run("allocate --config " + cfg).code, 2);
}

TEST_F(CliTest, BadSeedIsInputError) {
  std::string cfg = write("a.json", kAllocate);
  EXPECT_EQ(run("allocate --config " + cfg + " --seed -3").code, 2);
}

TEST_F(CliTest, AllocateWritesCsvAndManifest) {
  std::string cfg = write("a.json", kAllocate);
  fs::path out = dir_ / "o";
  Result r = run("allocate --config " + cfg + " --out " + out.string());
  ASSERT_EQ(r.code, 0) << r.out;
  for (const char* f : {"allocation.csv", "allocation_nodes.csv", "allocation_summary.csv", "manifest.json"}) {
    EXPECT_TRUE(fs::exists(out / f)) << f;
  }
  std::ifstream in(out / "allocation.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_NE(header.find("node"), std::string::npos);
}

TEST_F(CliTest, ReplayReproducesOutputs) {
  std::string cfg = write("a.json", kAllocate);
  fs::path out = dir_ / "o";
  ASSERT_EQ(run("allocate --config " + cfg + " --out " + out.string()).code, 0);
  Result r = run("replay " + (out / "manifest.json").string() + " --out " + (dir_ / "again").string());
  EXPECT_EQ(r.code, 0) << r.out;
  EXPECT_NE(r.out.find("allocation.csv,identical"), std::string::npos) << r.out;
  EXPECT_EQ(r.out.find("different"), std::string::npos) << r.out;
}

TEST_F(CliTest, ReplayDetectsTamperedHash) {
  std::string cfg = write("a.json", kAllocate);
  fs::path out = dir_ / "o";
  ASSERT_EQ(run("allocate --config " + cfg + " --out " + out.string()).code, 0);
  fs::path m = out / "manifest.json";
  std::ifstream in(m);
  std::stringstream ss;
  ss << in.rdbuf();
  std::string text = ss.str();
  size_t pos = text.find("\"sha256\": \"");
  ASSERT_NE(pos, std::string::npos);
  pos += 11;
  text[pos] = text[pos] == '0' ? '1' : '0';
  std::ofstream(m) << text;
  Result r = run("replay " + m.string() + " --out " + (dir_ / "again").string());
  EXPECT_EQ(r.code, 1) << r.out;
  EXPECT_NE(r.out.find("different"), std::string::npos);
}

}  // namespace
