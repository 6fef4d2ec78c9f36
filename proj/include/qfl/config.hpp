#pragma once

// Experiment configuration: INI-style "key = value" text with [section]
// headers. Every key has a default; unknown keys and out-of-range values are
// rejected with the offending key named.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "qfl/fed.hpp"
#include "qfl/oracle.hpp"
#include "qfl/synth.hpp"

namespace qfl::config {

enum class ExperimentKind { GenData, BiasSweep, FlCompare, SynthFloor, ShotSweep };

std::string to_string(ExperimentKind kind);
ExperimentKind parse_kind(const std::string& name);

struct DataSection {
  std::size_t n_train = 800;
  std::size_t n_test = 800;
  double flip_p = 0.05;
  double dirichlet_alpha = 0.3;
};

struct FedSection {
  fed::RoundConfig round;  // round.algorithm is ignored; see `algorithms`
  std::size_t rounds = 20;
  std::size_t seeds = 1;
  std::vector<fed::Algorithm> algorithms{fed::Algorithm::FedAvg, fed::Algorithm::Scaffold,
                                         fed::Algorithm::QAnchor};
};

struct NoiseSection {
  double p = 0.01;
  std::uint64_t shots = 0;  // 0 = analytic

  oracle::GradientMode mode() const;
};

struct BiasSweepSection {
  std::vector<double> noise_levels{0.01, 0.02, 0.03, 0.04, 0.05};
  std::size_t instances = 20;
};

struct ShotSweepSection {
  std::vector<std::uint64_t> shots{5000, 20000, 50000, 100000};
  std::size_t trials = 50;
  double p = 0.0;
};

struct SynthSection {
  std::size_t dimension = 20;
  std::size_t n_clients = 16;
  double curvature_min = 0.5;
  double curvature_max = 1.5;
  double curvature_heterogeneity = 0.0;
  double target_spread = 1.0;
  std::vector<fed::Algorithm> algorithms{fed::Algorithm::FedAvg, fed::Algorithm::Scaffold,
                                         fed::Algorithm::QAnchor};
  std::vector<double> bias_norms{0.0, 0.5, 1.0, 2.0};
  std::vector<double> kappa_b{1.0, 3.0, 10.0};
  double kappa_v = 5.21875;
  double sigma = 0.0;
  double sigma_q = 0.0;
  synth::BiasMode bias_mode = synth::BiasMode::Constant;
  double bias_lipschitz = 0.0;
  double bias_common_fraction = 0.5;
  std::size_t rounds = 300;
  std::size_t sample_size = 16;
  std::size_t local_epochs = 5;
  double lr_local = 0.02;
  double lr_global = 1.0;
  double local_momentum = 0.0;
  double alpha = 0.5;
};

struct OutputSection {
  // Off by default so reruns are byte-identical.
  bool record_wall_time = false;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::FlCompare;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir = "out";
  std::size_t workers = 1;

  DataSection data;
  FedSection fed;
  NoiseSection noise;
  oracle::ZneConfig zne;
  BiasSweepSection bias_sweep;
  ShotSweepSection shot_sweep;
  SynthSection synth;
  OutputSection output;

  void validate() const;
  // Switches the dataset to the full 5000 train / 10000 test split.
  void apply_paper_scale();
};

ExperimentConfig parse(std::istream& in);
ExperimentConfig parse(const std::string& text);
ExperimentConfig load(const std::filesystem::path& path);

// Every key, in a stable order, at full precision.
std::string serialize(const ExperimentConfig& cfg);

}  // namespace qfl::config
