#include "qfl/experiments.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "json.hpp"
#include "qfl/errors.hpp"
#include "qfl/parallel.hpp"

namespace qfl::experiments {

namespace {

using Clock = std::chrono::steady_clock;

// Sub-seed tags, one per consumer of randomness.
constexpr std::uint64_t kTrainTag = 1;
constexpr std::uint64_t kTestTag = 2;
constexpr std::uint64_t kPartitionTag = 3;
constexpr std::uint64_t kBiasTag = 10;
constexpr std::uint64_t kShotTag = 20;
constexpr std::uint64_t kInitTag = 30;
constexpr std::uint64_t kTrainingTag = 31;
constexpr std::uint64_t kSynthProblemTag = 40;
constexpr std::uint64_t kSynthOracleTag = 41;
constexpr std::uint64_t kSynthTrainingTag = 42;

std::uint64_t sub_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> path) {
  return RandomStream::derive(seed, path).next();
}

std::string num(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

std::ofstream open_output(const std::filesystem::path& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / name, std::ios::binary);
  if (!out) throw Error("cannot write " + (dir / name).string());
  return out;
}

void close_output(std::ofstream& out, const std::filesystem::path& dir, const std::string& name) {
  out.close();
  if (!out) throw Error("failed writing " + (dir / name).string());
}

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

nlohmann::ordered_json evaluation_json(const data::Evaluation& train, const data::Evaluation& test) {
  nlohmann::ordered_json j;
  j["train_loss"] = train.loss;
  j["train_acc"] = train.accuracy;
  j["test_loss"] = test.loss;
  j["test_acc"] = test.accuracy;
  return j;
}

}  // namespace

// --- quantum oracle -----------------------------------------------------------

QuantumOracle::QuantumOracle(const std::vector<data::BlobSample>& train, oracle::NoiseLevel noise,
                             oracle::GradientMode mode, oracle::ZneConfig zne)
    : train_(&train), noise_(noise), mode_(mode), zne_(std::move(zne)) {
  zne_.validate();
}

std::vector<oracle::LabeledInput> QuantumOracle::batch_inputs(
    std::span<const std::size_t> batch) const {
  std::vector<oracle::LabeledInput> out;
  out.reserve(batch.size());
  for (std::size_t id : batch) out.push_back(train_->at(id).to_labeled());
  return out;
}

fed::OracleGradient QuantumOracle::gradient(std::size_t, std::span<const double> x,
                                            std::span<const std::size_t> batch,
                                            RandomStream& stream) const {
  const auto est =
      oracle::grad_param_shift(qsim::CircuitParams(x), batch_inputs(batch), noise_, mode_, stream);
  return {est.values, est.circuit_evals};
}

fed::OracleGradient QuantumOracle::zne_gradient(std::size_t, std::span<const double> x,
                                                std::span<const std::size_t> batch,
                                                RandomStream& stream) const {
  const auto est = oracle::grad_zne(qsim::CircuitParams(x), batch_inputs(batch), noise_, mode_,
                                    zne_, stream);
  return {est.values, est.circuit_evals};
}

// --- gen-data -----------------------------------------------------------------

Dataset make_dataset(const config::ExperimentConfig& cfg) {
  Dataset ds;
  ds.train = data::generate_blobs(cfg.data.n_train, cfg.data.flip_p, sub_seed(cfg.seed, {kTrainTag}));
  ds.test = data::generate_blobs(cfg.data.n_test, cfg.data.flip_p, sub_seed(cfg.seed, {kTestTag}));
  ds.partition = data::dirichlet_partition(data::labels_of(ds.train), cfg.fed.round.n_clients,
                                           cfg.data.dirichlet_alpha,
                                           sub_seed(cfg.seed, {kPartitionTag}));
  return ds;
}

Dataset run_gen_data(const config::ExperimentConfig& cfg) {
  Dataset ds = make_dataset(cfg);
  auto train = open_output(cfg.out_dir, "train.csv");
  data::write_csv(train, ds.train);
  close_output(train, cfg.out_dir, "train.csv");
  auto test = open_output(cfg.out_dir, "test.csv");
  data::write_csv(test, ds.test);
  close_output(test, cfg.out_dir, "test.csv");
  auto part = open_output(cfg.out_dir, "partition.json");
  data::write_partition_json(part, ds.partition);
  close_output(part, cfg.out_dir, "partition.json");
  return ds;
}

// --- bias sweep ---------------------------------------------------------------

std::vector<BiasRow> run_bias_sweep(const config::ExperimentConfig& cfg) {
  const std::size_t n = cfg.bias_sweep.instances;
  // The same (params, sample) instances are reused at every noise level.
  RandomStream param_stream = RandomStream::derive(cfg.seed, {kBiasTag, 0});
  const auto samples = data::generate_blobs(n, cfg.data.flip_p, sub_seed(cfg.seed, {kBiasTag, 1}));
  std::vector<qsim::CircuitParams> params;
  std::vector<oracle::GradientEstimate> ideal;
  for (std::size_t k = 0; k < n; ++k) {
    params.push_back(qsim::CircuitParams::random(param_stream));
    const oracle::LabeledInput one[] = {samples[k].to_labeled()};
    ideal.push_back(oracle::grad_ideal(params.back(), one));
  }

  const auto& levels = cfg.bias_sweep.noise_levels;
  std::vector<BiasRow> rows(levels.size());
  parallel_for(levels.size(), cfg.workers, [&](std::size_t li) {
    const oracle::NoiseLevel noise(levels[li]);
    RandomStream stream = RandomStream::derive(cfg.seed, {kBiasTag, 2, li});
    std::vector<double> raw(n), zne(n);
    for (std::size_t k = 0; k < n; ++k) {
      const oracle::LabeledInput one[] = {samples[k].to_labeled()};
      raw[k] = oracle::fractional_error(
          oracle::grad_param_shift(params[k], one, noise, cfg.noise.mode(), stream), ideal[k]);
      zne[k] = oracle::fractional_error(
          oracle::grad_zne(params[k], one, noise, cfg.noise.mode(), cfg.zne, stream), ideal[k]);
    }
    rows[li] = {levels[li], mean_of(raw), std_of(raw), mean_of(zne), std_of(zne)};
  });

  auto out = open_output(cfg.out_dir, "bias_sweep.csv");
  out << "p,raw_mean,raw_std,zne_mean,zne_std\n";
  for (const BiasRow& r : rows) {
    out << num(r.p) << ',' << num(r.raw_mean) << ',' << num(r.raw_std) << ',' << num(r.zne_mean)
        << ',' << num(r.zne_std) << '\n';
  }
  close_output(out, cfg.out_dir, "bias_sweep.csv");
  return rows;
}

// --- fl-compare ---------------------------------------------------------------

double CompareRun::final_test_accuracy() const {
  return metrics.empty() ? init_test.accuracy : metrics.back().test_acc;
}

std::vector<CompareRun> run_fl_compare(const config::ExperimentConfig& cfg) {
  const Dataset ds = make_dataset(cfg);
  const QuantumOracle quantum(ds.train, oracle::NoiseLevel(cfg.noise.p), cfg.noise.mode(), cfg.zne);

  const auto& algos = cfg.fed.algorithms;
  const std::size_t n_seeds = cfg.fed.seeds;
  std::vector<CompareRun> runs(algos.size() * n_seeds);

  // Initial models depend on the seed index only, so every algorithm starts
  // from the same point.
  std::vector<qsim::CircuitParams> inits;
  std::vector<data::Evaluation> init_train, init_test;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    RandomStream stream = RandomStream::derive(cfg.seed, {kInitTag, s});
    inits.push_back(qsim::CircuitParams::random(stream));
    init_train.push_back(data::evaluate(inits.back(), ds.train));
    init_test.push_back(data::evaluate(inits.back(), ds.test));
  }

  parallel_for(runs.size(), cfg.workers, [&](std::size_t cell) {
    const std::size_t s = cell / algos.size();
    CompareRun& run = runs[cell];
    run.algorithm = algos[cell % algos.size()];
    run.seed_index = s;
    run.init_train = init_train[s];
    run.init_test = init_test[s];

    fed::RoundConfig round = cfg.fed.round;
    round.algorithm = run.algorithm;
    fed::TrainingOptions options;
    options.rounds = cfg.fed.rounds;
    options.seed = sub_seed(cfg.seed, {kTrainingTag, s});
    options.workers = 1;

    const auto start = Clock::now();
    const auto& init_values = inits[s].values();
    fed::run_training(
        round, ds.partition.shards, fed::Vector(init_values.begin(), init_values.end()), quantum,
        options, [&](const fed::TrainingState& state) {
          const qsim::CircuitParams model(state.server.x);
          const auto train = data::evaluate(model, ds.train);
          const auto test = data::evaluate(model, ds.test);
          fed::RoundMetrics m;
          m.round = state.server.round;
          m.algorithm = run.algorithm;
          m.train_loss = train.loss;
          m.train_acc = train.accuracy;
          m.test_loss = test.loss;
          m.test_acc = test.accuracy;
          m.grad_evals = state.circuit_evals;
          m.wall_ms = cfg.output.record_wall_time ? ms_since(start) : 0.0;
          run.metrics.push_back(m);
        });
  });

  for (std::size_t s = 0; s < n_seeds; ++s) {
    const std::string name = "metrics_seed" + std::to_string(s) + ".csv";
    auto out = open_output(cfg.out_dir, name);
    bool header = true;
    for (const CompareRun& run : runs) {
      if (run.seed_index != s) continue;
      fed::write_metrics_csv(out, run.metrics, header);
      header = false;
    }
    close_output(out, cfg.out_dir, name);
  }

  nlohmann::ordered_json summary;
  summary["seed"] = cfg.seed;
  summary["rounds"] = cfg.fed.rounds;
  summary["noise_p"] = cfg.noise.p;
  summary["n_train"] = cfg.data.n_train;
  summary["n_test"] = cfg.data.n_test;
  summary["runs"] = nlohmann::ordered_json::array();
  for (const CompareRun& run : runs) {
    nlohmann::ordered_json j;
    j["algorithm"] = std::string(fed::to_string(run.algorithm));
    j["seed_index"] = run.seed_index;
    j["init"] = evaluation_json(run.init_train, run.init_test);
    if (!run.metrics.empty()) {
      const auto& m = run.metrics.back();
      j["final"] = evaluation_json({m.train_loss, m.train_acc}, {m.test_loss, m.test_acc});
      j["grad_evals"] = m.grad_evals;
    }
    summary["runs"].push_back(j);
  }
  nlohmann::ordered_json means;
  for (fed::Algorithm algo : algos) {
    double sum = 0.0;
    for (const CompareRun& run : runs)
      if (run.algorithm == algo) sum += run.final_test_accuracy();
    means[std::string(fed::to_string(algo))] = sum / static_cast<double>(n_seeds);
  }
  summary["mean_final_test_acc"] = means;
  auto out = open_output(cfg.out_dir, "summary.json");
  out << summary.dump(2) << '\n';
  close_output(out, cfg.out_dir, "summary.json");
  return runs;
}

// --- shot sweep ---------------------------------------------------------------

std::vector<ShotRow> run_shot_sweep(const config::ExperimentConfig& cfg) {
  RandomStream setup = RandomStream::derive(cfg.seed, {kShotTag, 0});
  const qsim::CircuitParams params = qsim::CircuitParams::random(setup);
  const auto sample =
      data::generate_blobs(1, cfg.data.flip_p, sub_seed(cfg.seed, {kShotTag, 1})).front();
  const oracle::NoiseLevel noise(cfg.shot_sweep.p);

  const auto& shots = cfg.shot_sweep.shots;
  std::vector<ShotRow> rows(shots.size());
  // Sequential so the timings are not distorted by sibling cells.
  for (std::size_t k = 0; k < shots.size(); ++k) {
    RandomStream stream = RandomStream::derive(cfg.seed, {kShotTag, 2, k});
    const auto start = Clock::now();
    rows[k].shots = shots[k];
    rows[k].total_variance = oracle::variance_probe(params, sample.to_labeled(), shots[k],
                                                    cfg.shot_sweep.trials, noise, stream);
    rows[k].wall_ms = ms_since(start) / static_cast<double>(cfg.shot_sweep.trials);
  }

  auto out = open_output(cfg.out_dir, "shot_sweep.csv");
  out << "shots,total_variance,wall_ms\n";
  for (const ShotRow& r : rows) {
    out << r.shots << ',' << num(r.total_variance) << ',' << num(r.wall_ms) << '\n';
  }
  close_output(out, cfg.out_dir, "shot_sweep.csv");
  return rows;
}

// --- synth floor --------------------------------------------------------------

std::vector<FloorCell> run_synth_floor(const config::ExperimentConfig& cfg) {
  const config::SynthSection& sc = cfg.synth;
  synth::SynthSpec spec;
  spec.dimension = sc.dimension;
  spec.n_clients = sc.n_clients;
  spec.curvature_min = sc.curvature_min;
  spec.curvature_max = sc.curvature_max;
  spec.curvature_heterogeneity = sc.curvature_heterogeneity;
  spec.target_spread = sc.target_spread;
  spec.seed = sub_seed(cfg.seed, {kSynthProblemTag});
  const synth::SynthProblem problem = synth::SynthProblem::generate(spec);

  std::vector<FloorCell> cells;
  for (fed::Algorithm algo : sc.algorithms)
    for (double u : sc.bias_norms)
      for (double k : sc.kappa_b) cells.push_back({algo, u, k, {}});

  const std::uint64_t oracle_seed = sub_seed(cfg.seed, {kSynthOracleTag});
  const std::uint64_t training_seed = sub_seed(cfg.seed, {kSynthTrainingTag});
  parallel_for(cells.size(), cfg.workers, [&](std::size_t c) {
    FloorCell& cell = cells[c];
    synth::OracleSpec os;
    os.bias_norm = cell.bias_norm;
    os.sigma = sc.sigma;
    os.sigma_q = sc.sigma_q;
    os.kappa_b = cell.kappa_b;
    os.kappa_v = sc.kappa_v;
    os.bias_mode = sc.bias_mode;
    os.bias_lipschitz = sc.bias_lipschitz;
    os.bias_common_fraction = sc.bias_common_fraction;
    os.seed = oracle_seed;
    const synth::SynthOracle oracle(problem, os);

    fed::RoundConfig round;
    round.n_clients = sc.n_clients;
    round.sample_size = sc.sample_size;
    round.local_epochs = sc.local_epochs;
    round.batch_size = 1;
    round.lr_local = sc.lr_local;
    round.lr_global = sc.lr_global;
    round.local_momentum = sc.local_momentum;
    round.alpha = sc.alpha;
    round.algorithm = cell.algorithm;
    cell.report = synth::measure_floor(oracle, round, sc.rounds, training_seed);
  });

  auto out = open_output(cfg.out_dir, "synth_floor.csv");
  out << "algo,U_q,kappa_b,kappa_v,sigma_q,eta_tilde,plateau,mean_gamma,mean_gamma_zne,"
         "mean_lambda,plateaued\n";
  nlohmann::json reports = nlohmann::json::array();
  for (const FloorCell& cell : cells) {
    const synth::FloorReport& r = cell.report;
    out << fed::to_string(cell.algorithm) << ',' << num(cell.bias_norm) << ',' << num(cell.kappa_b)
        << ',' << num(sc.kappa_v) << ',' << num(sc.sigma_q) << ',' << num(r.eta_tilde) << ','
        << num(r.plateau) << ',' << num(r.window_mean(r.gamma)) << ','
        << num(r.window_mean(r.gamma_zne)) << ',' << num(r.window_mean(r.lambda)) << ','
        << (r.plateaued ? "true" : "false") << '\n';
    nlohmann::json j = synth::to_json(r);
    j["U_q"] = cell.bias_norm;
    j["kappa_b"] = cell.kappa_b;
    reports.push_back(std::move(j));
  }
  close_output(out, cfg.out_dir, "synth_floor.csv");
  auto json_out = open_output(cfg.out_dir, "floor_reports.json");
  json_out << reports.dump(1) << '\n';
  close_output(json_out, cfg.out_dir, "floor_reports.json");
  return cells;
}

void run(const config::ExperimentConfig& cfg) {
  cfg.validate();
  switch (cfg.kind) {
    case config::ExperimentKind::GenData:
      run_gen_data(cfg);
      break;
    case config::ExperimentKind::BiasSweep:
      run_bias_sweep(cfg);
      break;
    case config::ExperimentKind::FlCompare:
      run_fl_compare(cfg);
      break;
    case config::ExperimentKind::ShotSweep:
      run_shot_sweep(cfg);
      break;
    case config::ExperimentKind::SynthFloor:
      run_synth_floor(cfg);
      break;
  }
}

}  // namespace qfl::experiments
