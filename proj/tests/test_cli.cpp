#include <sys/wait.h>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "dial/data.hpp"
#include "dial/net.hpp"
#include "dial/runner.hpp"
#include "helpers.hpp"

namespace fs = std::filesystem;

namespace {

const fs::path& scratch() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / ("dial_cli_test_" + std::to_string(::getpid()));
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

int run(const std::string& args) {
  const std::string cmd = std::string(DIAL_CLI_PATH) + " " + args + " >" +
                          (scratch() / "stdout.txt").string() + " 2>" +
                          (scratch() / "stderr.txt").string();
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
  const fs::path p = scratch() / name;
  std::ofstream(p) << text;
  return p;
}

const char* kTinyConfig =
    "data_n = 60\n"
    "data_m = 48\n"
    "hidden = 8\n"
    "epochs = 3\n";

}  // namespace

TEST_CASE("usage errors exit with 1") {
  CHECK(run("") == 1);
  CHECK(run("frobnicate") == 1);
  CHECK(run("train") == 1);
  CHECK(run("train --out x --config " + (scratch() / "missing.cfg").string()) == 1);
  const auto bad = write_config("bad.cfg", "learning_rate = 3\n");
  CHECK(run("train --out " + (scratch() / "bad").string() + " --config " + bad.string()) == 1);
  CHECK(slurp(scratch() / "stderr.txt").find("unknown key") != std::string::npos);
}

TEST_CASE("config-keys lists every key") {
  REQUIRE(run("config-keys") == 0);
  const std::string out = slurp(scratch() / "stdout.txt");
  CHECK(out.find("lambda_sparse") != std::string::npos);
  CHECK(out.find("batch_mode") != std::string::npos);
}

TEST_CASE("gen-data writes a loadable CSV") {
  const auto path = scratch() / "blobs.csv";
  REQUIRE(run("gen-data --n 40 --m 30 --seed 3 --out " + path.string()) == 0);
  const auto ds = dial::load_csv(path.string());
  CHECK(ds.source_count() == 40);
  CHECK(ds.target_count() == 30);
  CHECK(ds.classes == 3);

  const auto moons = scratch() / "moons.csv";
  REQUIRE(run("gen-data --generator moons --n 40 --m 30 --out " + moons.string()) == 0);
  CHECK(dial::load_csv(moons.string()).classes == 2);
  CHECK(run("gen-data --generator spirals") == 1);
}

TEST_CASE("train writes metrics, timing, config and checkpoint; eval reads them") {
  const auto cfg = write_config("tiny.cfg", kTinyConfig);
  const auto out = scratch() / "run";
  REQUIRE(run("train --quiet --config " + cfg.string() + " --out " + out.string()) == 0);
  const std::string metrics = slurp(out / "metrics.jsonl");
  std::size_t lines = 0;
  for (char c : metrics) lines += c == '\n' ? 1 : 0;
  CHECK(lines == 3);
  CHECK(metrics.rfind("{\"epoch\":0,\"lr\":", 0) == 0);
  CHECK(metrics.find("wall_clock") == std::string::npos);
  CHECK(slurp(out / "timing.jsonl").find("wall_clock_seconds") != std::string::npos);
  CHECK(dial::ExperimentConfig::load((out / "config.txt").string()).epochs == 3);
  const auto [net, params] = dial::load_checkpoint((out / "model.ckpt").string());
  CHECK(net.input_width() == 2);

  const auto data = scratch() / "eval.csv";
  REQUIRE(run("gen-data --n 60 --m 48 --seed 1 --out " + data.string()) == 0);
  REQUIRE(run("eval --checkpoint " + (out / "model.ckpt").string() + " --data " +
              data.string()) == 0);
  const std::string report = slurp(scratch() / "stdout.txt");
  CHECK(report.find("target_accuracy") != std::string::npos);
  CHECK(run("eval --checkpoint " + (scratch() / "nope.ckpt").string() + " --data " +
            data.string()) == 1);
}

TEST_CASE("divergence exits with 2") {
  const auto cfg = write_config("diverge.cfg", std::string(kTinyConfig) +
                                                   "variant = none\n"
                                                   "lr0 = 1e300\n");
  CHECK(run("train --quiet --config " + cfg.string() + " --out " +
            (scratch() / "diverge").string()) == 2);
}

TEST_CASE("sweep, ablate and gradcheck") {
  const auto cfg = write_config("sweep.cfg", kTinyConfig);
  REQUIRE(run("sweep --config " + cfg.string() + " --lambdas 0,0.5") == 0);
  const std::string sweep = slurp(scratch() / "stdout.txt");
  CHECK(sweep.rfind("lambda,", 0) == 0);
  CHECK(run("sweep --config " + cfg.string() + " --lambdas 0,abc") == 1);

  const auto table = scratch() / "ablation.csv";
  REQUIRE(run("ablate --config " + cfg.string() + " --seeds 1 --out " + table.string()) == 0);
  std::size_t lines = 0;
  for (char c : slurp(table)) lines += c == '\n' ? 1 : 0;
  CHECK(lines == 13);

  REQUIRE(run("gradcheck --config " + cfg.string()) == 0);
  CHECK(slurp(scratch() / "stdout.txt").find("laplace_ml") != std::string::npos);
}
