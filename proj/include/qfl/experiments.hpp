#pragma once

// The experiment drivers behind the command-line tool. Each writes its files
// into cfg.out_dir and also returns the computed rows.

#include <cstdint>
#include <filesystem>
#include <vector>

#include "qfl/config.hpp"
#include "qfl/data.hpp"
#include "qfl/fed.hpp"
#include "qfl/oracle.hpp"
#include "qfl/synth.hpp"

namespace qfl::experiments {

// Binary Blobs shards behind the federated engine: raw oracle at the
// configured noise level, ZNE oracle on top of it.
class QuantumOracle : public fed::GradientOracle {
 public:
  QuantumOracle(const std::vector<data::BlobSample>& train, oracle::NoiseLevel noise,
                oracle::GradientMode mode, oracle::ZneConfig zne);

  std::size_t dimension() const override { return qsim::kNumParams; }
  fed::OracleGradient gradient(std::size_t client, std::span<const double> x,
                               std::span<const std::size_t> batch,
                               RandomStream& stream) const override;
  fed::OracleGradient zne_gradient(std::size_t client, std::span<const double> x,
                                   std::span<const std::size_t> batch,
                                   RandomStream& stream) const override;

 private:
  std::vector<oracle::LabeledInput> batch_inputs(std::span<const std::size_t> batch) const;

  const std::vector<data::BlobSample>* train_;
  oracle::NoiseLevel noise_;
  oracle::GradientMode mode_;
  oracle::ZneConfig zne_;
};

struct Dataset {
  std::vector<data::BlobSample> train;
  std::vector<data::BlobSample> test;
  data::Partition partition;
};

// Deterministic in (seed, data section, n_clients).
Dataset make_dataset(const config::ExperimentConfig& cfg);

// train.csv, test.csv, partition.json
Dataset run_gen_data(const config::ExperimentConfig& cfg);

struct BiasRow {
  double p = 0.0;
  double raw_mean = 0.0;
  double raw_std = 0.0;
  double zne_mean = 0.0;
  double zne_std = 0.0;
};

// bias_sweep.csv
std::vector<BiasRow> run_bias_sweep(const config::ExperimentConfig& cfg);

struct CompareRun {
  fed::Algorithm algorithm = fed::Algorithm::FedAvg;
  std::size_t seed_index = 0;
  data::Evaluation init_train;
  data::Evaluation init_test;
  fed::MetricsSeries metrics;

  // Final-round test accuracy, or the init accuracy when no round ran.
  double final_test_accuracy() const;
};

// metrics_seed<k>.csv per seed plus summary.json.
std::vector<CompareRun> run_fl_compare(const config::ExperimentConfig& cfg);

struct ShotRow {
  std::uint64_t shots = 0;
  double total_variance = 0.0;
  double wall_ms = 0.0;  // mean wall time per gradient evaluation
};

// shot_sweep.csv
std::vector<ShotRow> run_shot_sweep(const config::ExperimentConfig& cfg);

struct FloorCell {
  fed::Algorithm algorithm = fed::Algorithm::FedAvg;
  double bias_norm = 0.0;
  double kappa_b = 1.0;
  synth::FloorReport report;
};

// synth_floor.csv and floor_reports.json
std::vector<FloorCell> run_synth_floor(const config::ExperimentConfig& cfg);

// Dispatch on cfg.kind.
void run(const config::ExperimentConfig& cfg);

}  // namespace qfl::experiments
