#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include <sys/wait.h>

#include "oracles.hpp"

namespace fs = std::filesystem;

namespace {

struct Result {
  int status = -1;
  std::string output;
};

Result run_cli(const std::string& args, const fs::path& dir) {
  const auto log = dir / "cli.log";
  const std::string cmd = std::string(TRAJATTR_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  std::ifstream in(log);
  std::stringstream ss;
  ss << in.rdbuf();
  return {WIFEXITED(raw) ? WEXITSTATUS(raw) : -1, ss.str()};
}

fs::path write_config(const fs::path& dir) {
  const auto path = dir / "small.conf";
  std::ofstream(path) << "n_traj = 24\ndata_seed = 7\nd_model = 8\nepochs = 5\nencoder_seed = 3\n"
                         "k_max = 4\ncluster_seed = 11\nout = run\n";
  return path;
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("run, explain and validate") {
    const auto dir = oracle::temp_dir("cli");
    const auto conf = write_config(dir);
    const auto run = run_cli("run --config " + conf.string(), dir);
    INFO(run.output);
    REQUIRE(run.status == 0);
    CHECK(run.output.find("orig") != std::string::npos);
    CHECK(fs::exists(dir / "run" / "metrics.csv"));

    const auto csv = run_cli("report --config " + conf.string() + " --format csv", dir);
    CHECK(csv.status == 0);
    CHECK(csv.output.find("policy,E[V(s0)]") != std::string::npos);

    const auto explain = run_cli("explain " + (dir / "run").string() + " \"(1,1)\"", dir);
    CHECK(explain.status == 0);
    CHECK(explain.output.find("action:") != std::string::npos);

    const auto svg = run_cli("explain " + (dir / "run").string() + " \"(1,1)\" --format svg --out " +
                                 (dir / "svg").string(),
                             dir);
    CHECK(svg.status == 0);

    const auto terminal = run_cli("explain " + (dir / "run").string() + " \"(0,6)\"", dir);
    CHECK(terminal.status == 1);
    CHECK(terminal.output.find("terminal") != std::string::npos);

    const auto ok = run_cli("validate " + (dir / "run").string(), dir);
    CHECK(ok.status == 0);
    CHECK(ok.output.find("FAIL") == std::string::npos);

    {
      std::ifstream in(dir / "run" / "data_embeddings.csv");
      std::stringstream ss;
      ss << in.rdbuf();
      std::string text = ss.str();
      const auto row = text.find("\noriginal,") + 10;
      text.replace(row, text.find(',', row) - row, "0.9");
      std::ofstream(dir / "run" / "data_embeddings.csv") << text;
    }
    const auto bad = run_cli("validate " + (dir / "run").string(), dir);
    CHECK(bad.status == 3);
    CHECK(bad.output.find("FAIL") != std::string::npos);
  }

  TEST_CASE("user errors") {
    const auto dir = oracle::temp_dir("cli_errors");
    CHECK(run_cli("run --config " + (dir / "missing.conf").string(), dir).status == 1);
    CHECK(run_cli("validate " + (dir / "nothing").string(), dir).status == 1);
    CHECK(run_cli("explain " + (dir / "nothing").string() + " \"(1,1)\"", dir).status == 1);
    CHECK(run_cli("frobnicate", dir).status != 0);
    std::ofstream(dir / "noseed.conf") << "n_traj = 10\n";
    const auto noseed = run_cli("run --config " + (dir / "noseed.conf").string(), dir);
    CHECK(noseed.status == 1);
    CHECK(noseed.output.find("data_seed") != std::string::npos);
  }
}
