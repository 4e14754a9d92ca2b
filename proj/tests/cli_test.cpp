#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

namespace fs = std::filesystem;

namespace {

const char* kConfig = R"(A = [[0.5, 1.1], [0.0, 0.8]]
B = [[1, 0], [0, 1]]
sigma_w = 1
Q = [[1, 0], [0, 0.001]]
R = [[1000, 0], [0, 1000]]
delta = 0.1
T = 100
T_e = 20
F = 12
master_seed = 3
lambda2_grid = [0.5, 1]
data = data.csv
)";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("dualctl_cli_" + std::to_string(::getpid()) + "_" +
            ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
    write("example.conf", kConfig);
  }
  void TearDown() override { fs::remove_all(dir_); }

  void write(const std::string& name, const std::string& text) const { std::ofstream(dir_ / name) << text; }

  std::string read(const std::string& name) const {
    std::ifstream in(dir_ / name, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
  }

  // Runs the CLI inside the scratch directory; stderr goes to err_.
  int run(const std::string& args) {
    const std::string cmd = "cd '" + dir_.string() + "' && '" DUALCTL_CLI "' " + args + " > stdout.txt 2> stderr.txt";
    const int status = std::system(cmd.c_str());
    err_ = read("stderr.txt");
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  }

  double report_value(const std::string& file, const std::string& key) const {
    const std::regex re("^" + key + " = (.*)$", std::regex::multiline);
    std::smatch m;
    const std::string text = read(file);
    if (!std::regex_search(text, m, re)) throw std::runtime_error(key + " not in " + file);
    return std::stod(m[1]);
  }

  fs::path dir_;
  std::string err_;
};

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text) n += c == '\n';
  return n;
}

}  // namespace

TEST_F(Cli, IdentifyRoundTrip) {
  ASSERT_EQ(run("generate-data --config example.conf --out data.csv"), 0) << err_;
  EXPECT_EQ(count_lines(read("data.csv")), 1 + 10 * 6);
  ASSERT_EQ(run("identify --config example.conf --out model.txt"), 0) << err_;
  ASSERT_EQ(run("identify --config example.conf --data data.csv --out model2.txt"), 0) << err_;
  EXPECT_EQ(read("model.txt"), read("model2.txt"));
  EXPECT_NEAR(report_value("model.txt", "delta"), 0.1, 0.0);
  EXPECT_NEAR(report_value("model.txt", "c_delta"), 13.3616, 1e-4);
  ASSERT_EQ(run("synth --config example.conf --model model.txt --mode robust --out robust.txt"), 0) << err_;
  EXPECT_EQ(read("robust.txt").rfind("mode = robust\n", 0), 0u);
}

TEST_F(Cli, MissingDeltaNamesTheField) {
  std::string text = kConfig;
  text.replace(text.find("delta = 0.1\n"), 12, "");
  write("example.conf", text);
  ASSERT_EQ(run("generate-data -c example.conf -o data.csv"), 0) << err_;
  EXPECT_EQ(run("identify -c example.conf -o model.txt"), 2);
  EXPECT_NE(err_.find("delta"), std::string::npos) << err_;
}

TEST_F(Cli, SingleTransitionIsUnderdetermined) {
  write("data.csv", "rollout_id,t,x_1,x_2,u_1,u_2\n0,1,1,0,0.5,0\n0,2,0.3,0.2,0,0\n");
  EXPECT_EQ(run("identify -c example.conf -o model.txt"), 3) << err_;
  EXPECT_FALSE(err_.empty());
}

TEST_F(Cli, InfeasibleSynthesisExitsFour) {
  // Zero data makes D = 0: no controller is certified for every plant.
  write("inline.conf", std::string(kConfig) +
                           "A_hat = [[0.5, 1.1], [0, 0.8]]\nB_hat = [[1, 0], [0, 1]]\n"
                           "D = [[0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0], [0, 0, 0, 0]]\nc_delta = 1\n");
  EXPECT_EQ(run("synth -c inline.conf --mode robust"), 4) << err_;
}

TEST_F(Cli, HugeInformationRobustMatchesNominal) {
  ASSERT_EQ(run("generate-data -c example.conf -o data.csv"), 0) << err_;
  ASSERT_EQ(run("identify -c example.conf -o model.txt"), 0) << err_;
  // Scale D by 1e6 through the inline-model keys.
  std::string model = read("model.txt");
  const std::regex d_line("^D = (.*)$", std::regex::multiline);
  std::smatch m;
  ASSERT_TRUE(std::regex_search(model, m, d_line));
  std::string scaled = m[1];
  std::string out;
  const std::regex number(R"(-?\d+(\.\d+)?(e-?\d+)?)");
  auto begin = std::sregex_iterator(scaled.begin(), scaled.end(), number);
  size_t last = 0;
  for (auto it = begin; it != std::sregex_iterator(); ++it) {
    out += scaled.substr(last, it->position() - last);
    std::ostringstream v;
    v.precision(17);
    v << std::stod(it->str()) * 1e6;
    out += v.str();
    last = it->position() + it->length();
  }
  out += scaled.substr(last);
  const std::string body = std::regex_replace(model, d_line, "D = " + out);
  write("big.conf", std::string(kConfig) + body.substr(body.find("\nA_hat = ") + 1));
  ASSERT_EQ(run("synth -c big.conf --mode nominal -o nominal.txt"), 0) << err_;
  ASSERT_EQ(run("synth -c big.conf --mode robust -o robust.txt"), 0) << err_;
  const double nominal = report_value("nominal.txt", "cost");
  const double robust = report_value("robust.txt", "cost");
  EXPECT_GE(robust, nominal * (1 - 1e-6));
  EXPECT_LE(robust, nominal * 1.005);
}

TEST_F(Cli, EmptyDualGridIsRejected) {
  ASSERT_EQ(run("generate-data -c example.conf -o data.csv"), 0) << err_;
  ASSERT_EQ(run("identify -c example.conf -o model.txt"), 0) << err_;
  EXPECT_EQ(run("synth -c example.conf --model model.txt --mode dual --lambda2-grid '[]'"), 2);
  EXPECT_NE(err_.find("lambda2_grid"), std::string::npos) << err_;
  EXPECT_EQ(run("dual-plan -c example.conf --model model.txt --lambda2-grid '[0, 1]'"), 2);
  EXPECT_NE(err_.find("lambda2_grid"), std::string::npos) << err_;
}

TEST_F(Cli, RepeatedSynthesisIsByteIdentical) {
  ASSERT_EQ(run("generate-data -c example.conf -o data.csv"), 0) << err_;
  ASSERT_EQ(run("identify -c example.conf -o model.txt"), 0) << err_;
  for (const char* mode : {"nominal", "robust", "dual"}) {
    const std::string base = std::string("synth -c example.conf --model model.txt --mode ") + mode;
    ASSERT_EQ(run(base + " -o a.txt"), 0) << err_;
    ASSERT_EQ(run(base + " -o b.txt --jobs 2"), 0) << err_;
    EXPECT_EQ(read("a.txt"), read("b.txt")) << mode;
  }
}

TEST_F(Cli, BadUsageExitsTwo) {
  EXPECT_EQ(run("synth -c example.conf --mode sideways"), 2);
  EXPECT_EQ(run("identify"), 2);
  EXPECT_EQ(run("no-such-command"), 2);
  write("typo.conf", std::string(kConfig) + "sigma = 1\n");
  EXPECT_EQ(run("generate-data -c typo.conf"), 2);
  EXPECT_NE(err_.find("sigma"), std::string::npos) << err_;
  EXPECT_EQ(run("generate-data -c missing.conf"), 2);
  EXPECT_EQ(run("--help"), 0);
}

TEST_F(Cli, ExperimentSmokeAndManifestRerun) {
  ASSERT_EQ(run("experiment -c example.conf --mc-runs 2 --out first"), 0) << err_;
  for (const char* f : {"results.csv", "aggregate.csv", "plot_data.csv", "manifest.txt"}) {
    EXPECT_TRUE(fs::exists(dir_ / "first" / f)) << f;
  }
  const std::string aggregate = read("first/aggregate.csv");
  EXPECT_EQ(count_lines(aggregate), 1 + 9);
  EXPECT_EQ(count_lines(read("first/results.csv")), 1 + 3 * 2);

  // Every finite nominal entry of the plot data normalizes to one.
  std::istringstream plot(read("first/plot_data.csv"));
  std::string line;
  std::getline(plot, line);
  EXPECT_EQ(line, "panel,strategy,run_id,normalized_cost");
  int nominal_rows = 0;
  while (std::getline(plot, line)) {
    if (line.find(",nominal,") == std::string::npos) continue;
    ++nominal_rows;
    EXPECT_DOUBLE_EQ(std::stod(line.substr(line.rfind(',') + 1)), 1.0) << line;
  }
  EXPECT_EQ(nominal_rows, 3 * 2);

  ASSERT_EQ(run("experiment -c first/manifest.txt --out second"), 0) << err_;
  for (const char* f : {"results.csv", "aggregate.csv", "plot_data.csv"}) {
    EXPECT_EQ(read(std::string("first/") + f), read(std::string("second/") + f)) << f;
  }
}

TEST_F(Cli, ExperimentOutputDirectoryFromEnvironment) {
  ASSERT_EQ(run("experiment -c example.conf --mc-runs 1 --jobs 1 --seed 11 -o explicit"), 0) << err_;
  const std::string cmd = "cd '" + dir_.string() + "' && DUALCTL_OUT_DIR=envdir '" DUALCTL_CLI
                          "' experiment -c example.conf --mc-runs 1 --seed 11 > /dev/null 2>&1";
  ASSERT_EQ(std::system(cmd.c_str()), 0);
  EXPECT_TRUE(fs::exists(dir_ / "envdir" / "manifest.txt"));
  EXPECT_EQ(read("envdir/results.csv"), read("explicit/results.csv"));
}
