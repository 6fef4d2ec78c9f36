#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>

#include "doctest.h"
#include "json.hpp"
#include "qfl/config.hpp"
#include "qfl/experiments.hpp"

using namespace qfl;
using namespace qfl::experiments;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("qfl_test_experiments_" + name);
  fs::remove_all(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string first_line(const fs::path& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  return line;
}

std::size_t line_count(const fs::path& path) {
  std::ifstream in(path);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) ++n;
  return n;
}

// A few hundred gradient evaluations in total.
config::ExperimentConfig tiny_compare(const fs::path& out) {
  config::ExperimentConfig cfg;
  cfg.kind = config::ExperimentKind::FlCompare;
  cfg.seed = 5;
  cfg.out_dir = out;
  cfg.data.n_train = 48;
  cfg.data.n_test = 32;
  cfg.data.dirichlet_alpha = 5.0;
  cfg.fed.round.n_clients = 3;
  cfg.fed.round.sample_size = 3;
  cfg.fed.round.local_epochs = 1;
  cfg.fed.round.batch_size = 8;
  cfg.fed.rounds = 2;
  cfg.fed.seeds = 2;
  cfg.validate();
  return cfg;
}

config::ExperimentConfig tiny_synth(const fs::path& out) {
  config::ExperimentConfig cfg;
  cfg.kind = config::ExperimentKind::SynthFloor;
  cfg.seed = 9;
  cfg.out_dir = out;
  cfg.synth.dimension = 6;
  cfg.synth.n_clients = 4;
  cfg.synth.sample_size = 3;
  cfg.synth.rounds = 40;
  cfg.synth.bias_norms = {0.0, 1.0};
  cfg.synth.kappa_b = {1.0, 10.0};
  cfg.synth.sigma = 0.1;
  cfg.synth.sigma_q = 0.05;
  cfg.validate();
  return cfg;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(QFL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("gen-data writes the split and partition") {
  auto cfg = tiny_compare(scratch_dir("gen"));
  const Dataset d = run_gen_data(cfg);
  CHECK(d.train.size() == 48);
  CHECK(d.test.size() == 32);
  CHECK(line_count(cfg.out_dir / "train.csv") == 49);
  CHECK(line_count(cfg.out_dir / "test.csv") == 33);

  std::ifstream in(cfg.out_dir / "partition.json");
  const data::Partition back = data::read_partition_json(in);
  REQUIRE(back.shards.size() == 3);
  std::set<std::size_t> seen;
  for (const auto& shard : back.shards) seen.insert(shard.begin(), shard.end());
  CHECK(seen.size() == 48);

  // Same seed, same data.
  const Dataset again = make_dataset(cfg);
  CHECK(again.train == d.train);
  CHECK(again.partition.shards == d.partition.shards);
}

TEST_CASE("bias sweep at zero noise has no error") {
  auto cfg = tiny_compare(scratch_dir("bias"));
  cfg.bias_sweep.noise_levels = {0.0, 0.03};
  cfg.bias_sweep.instances = 4;
  const auto rows = run_bias_sweep(cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].raw_mean < 1e-12);
  CHECK(rows[0].zne_mean < 1e-9);
  CHECK(rows[1].raw_mean > 0.05);
  CHECK(rows[1].zne_mean < rows[1].raw_mean);
  CHECK(first_line(cfg.out_dir / "bias_sweep.csv") == "p,raw_mean,raw_std,zne_mean,zne_std");
  CHECK(line_count(cfg.out_dir / "bias_sweep.csv") == 3);
}

TEST_CASE("fl-compare with zero rounds reports the init model") {
  auto cfg = tiny_compare(scratch_dir("zero"));
  cfg.fed.rounds = 0;
  cfg.fed.seeds = 1;
  const auto runs = run_fl_compare(cfg);
  REQUIRE(runs.size() == 3);
  for (const auto& r : runs) {
    CHECK(r.metrics.empty());
    CHECK(r.final_test_accuracy() == r.init_test.accuracy);
    CHECK(r.init_test.accuracy == runs[0].init_test.accuracy);
  }
  CHECK(line_count(cfg.out_dir / "metrics_seed0.csv") == 1);
}

TEST_CASE("fl-compare reruns are byte-identical") {
  auto a = tiny_compare(scratch_dir("rerun_a"));
  auto b = tiny_compare(scratch_dir("rerun_b"));
  const auto runs = run_fl_compare(a);
  run_fl_compare(b);
  CHECK(runs.size() == 6);
  for (const char* name : {"metrics_seed0.csv", "metrics_seed1.csv", "summary.json"}) {
    CAPTURE(name);
    CHECK(slurp(a.out_dir / name) == slurp(b.out_dir / name));
  }
  CHECK(first_line(a.out_dir / "metrics_seed0.csv") ==
        "round,algo,train_loss,train_acc,test_loss,test_acc,grad_evals,wall_ms");
  // header + 3 algorithms x 2 rounds
  CHECK(line_count(a.out_dir / "metrics_seed0.csv") == 7);

  const auto summary = nlohmann::json::parse(slurp(a.out_dir / "summary.json"));
  CHECK(summary["runs"].size() == 6);
  for (const char* algo : {"fedavg", "scaffold", "qanchor"}) {
    const double acc = summary["mean_final_test_acc"][algo].get<double>();
    CHECK(acc >= 0.0);
    CHECK(acc <= 1.0);
  }

  // A different seed changes the run.
  auto c = tiny_compare(scratch_dir("rerun_c"));
  c.seed = 6;
  run_fl_compare(c);
  CHECK(slurp(a.out_dir / "summary.json") != slurp(c.out_dir / "summary.json"));
}

TEST_CASE("fl-compare worker count does not change results") {
  auto a = tiny_compare(scratch_dir("workers_a"));
  auto b = tiny_compare(scratch_dir("workers_b"));
  b.workers = 3;
  run_fl_compare(a);
  run_fl_compare(b);
  CHECK(slurp(a.out_dir / "summary.json") == slurp(b.out_dir / "summary.json"));
}

TEST_CASE("shot sweep variance falls with shots") {
  auto cfg = tiny_compare(scratch_dir("shots"));
  cfg.shot_sweep.shots = {200, 20000};
  cfg.shot_sweep.trials = 8;
  const auto rows = run_shot_sweep(cfg);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].total_variance > 0.0);
  // ~1/shots; 100x more shots leaves far less than a fifth of the variance
  CHECK(rows[1].total_variance < rows[0].total_variance / 5.0);
  CHECK(first_line(cfg.out_dir / "shot_sweep.csv") == "shots,total_variance,wall_ms");
}

TEST_CASE("synth floor grid and determinism") {
  auto a = tiny_synth(scratch_dir("synth_a"));
  auto b = tiny_synth(scratch_dir("synth_b"));
  b.workers = 2;
  const auto cells = run_synth_floor(a);
  run_synth_floor(b);
  // 3 algorithms x 2 bias norms x 2 kappa_b
  CHECK(cells.size() == 12);
  CHECK(line_count(a.out_dir / "synth_floor.csv") == 13);
  CHECK(first_line(a.out_dir / "synth_floor.csv").rfind("algo,U_q,kappa_b,", 0) == 0);
  CHECK(slurp(a.out_dir / "synth_floor.csv") == slurp(b.out_dir / "synth_floor.csv"));
  CHECK(slurp(a.out_dir / "floor_reports.json") == slurp(b.out_dir / "floor_reports.json"));
  for (const auto& c : cells) {
    CHECK(c.report.grad_norm_sq.size() == 40);
    CHECK(std::isfinite(c.report.plateau));
  }
}

TEST_CASE("run dispatches on kind") {
  auto cfg = tiny_synth(scratch_dir("dispatch"));
  run(cfg);
  CHECK(fs::exists(cfg.out_dir / "synth_floor.csv"));
}

TEST_CASE("command-line exit codes") {
  const fs::path dir = scratch_dir("cli");
  fs::create_directories(dir);
  {
    std::ofstream(dir / "bad_key.ini") << "[data]\nn_trian = 5\n";
    std::ofstream(dir / "bad_value.ini") << "[noise]\np = 2\n";
    std::ofstream(dir / "small.ini") << "[synth]\nrounds = 10\ndimension = 4\nn_clients = 2\n"
                                        "sample_size = 2\nbias_norms = 1\nkappa_b = 3\n";
  }
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("") == 1);
  CHECK(run_cli("no-such-command") == 1);
  CHECK(run_cli("synth-floor --config " + (dir / "bad_key.ini").string()) == 1);
  CHECK(run_cli("synth-floor --config " + (dir / "bad_value.ini").string()) == 1);
  CHECK(run_cli("synth-floor --config " + (dir / "missing.ini").string()) == 1);
  CHECK(run_cli("synth-floor --workers 0") == 1);
  CHECK(run_cli("synth-floor --config " + (dir / "small.ini").string() + " --out " +
                (dir / "out").string()) == 0);
  CHECK(fs::exists(dir / "out" / "synth_floor.csv"));
}
