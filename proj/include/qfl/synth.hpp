#pragma once

// Synthetic biased-oracle testbed: quadratic client objectives
// f_i(x) = 1/2 (x - b_i)^T A_i (x - b_i) with injectable hardware-style bias
// and Gaussian noise, used to measure error floors of the federated
// algorithms and the control-error diagnostics of Q-ANCHOR.

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "json.hpp"
#include "qfl/fed.hpp"
#include "qfl/random.hpp"

namespace qfl::synth {

struct SynthSpec {
  std::size_t dimension = 20;
  std::size_t n_clients = 16;
  // Eigenvalues of A_i are drawn from [curvature_min, curvature_max].
  double curvature_min = 0.5;
  double curvature_max = 1.5;
  // 0: every client shares one A; 1: independent A_i per client.
  double curvature_heterogeneity = 1.0;
  // Scale of the client minimizers b_i around the origin (drives G).
  double target_spread = 1.0;
  std::uint64_t seed = 0;
};

class SynthProblem {
 public:
  static SynthProblem generate(const SynthSpec& spec);
  SynthProblem(std::vector<Eigen::MatrixXd> curvatures, std::vector<Eigen::VectorXd> targets);

  std::size_t dimension() const { return static_cast<std::size_t>(targets_.front().size()); }
  std::size_t n_clients() const { return targets_.size(); }
  const Eigen::MatrixXd& curvature(std::size_t i) const { return curvatures_[i]; }
  const Eigen::VectorXd& target(std::size_t i) const { return targets_[i]; }

  // beta = max_i ||A_i||_2
  double smoothness() const;
  double local_objective(std::size_t i, const Eigen::VectorXd& x) const;
  Eigen::VectorXd local_gradient(std::size_t i, const Eigen::VectorXd& x) const;
  double objective(const Eigen::VectorXd& x) const;
  Eigen::VectorXd gradient(const Eigen::VectorXd& x) const;
  // argmin f = (sum A_i)^{-1} sum A_i b_i
  Eigen::VectorXd minimizer() const;

  // All A_i multiplied by c.
  SynthProblem scaled(double c) const;

 private:
  std::vector<Eigen::MatrixXd> curvatures_;
  std::vector<Eigen::VectorXd> targets_;
};

enum class BiasMode {
  Constant,    // b_{q,i} fixed, ||b_{q,i}|| = U_q, L_q = 0
  Saturating,  // U_q tanh(s <w_i, x> + t_i) u_i, Lipschitz constant U_q s
};

struct OracleSpec {
  double bias_norm = 0.0;  // U_q
  double sigma = 0.0;      // classical stochastic noise
  double sigma_q = 0.0;    // shot noise
  double kappa_b = 1.0;    // ZNE bias suppression
  double kappa_v = 1.0;    // ZNE variance amplification
  BiasMode bias_mode = BiasMode::Constant;
  double bias_lipschitz = 0.0;  // L_q for the saturating mode
  // Fraction of each bias vector shared by all clients; the rest is a
  // client-specific direction.
  double bias_common_fraction = 0.5;
  std::uint64_t seed = 0;

  void validate() const;
};

class SynthOracle : public fed::GradientOracle {
 public:
  SynthOracle(const SynthProblem& problem, const OracleSpec& spec);

  const SynthProblem& problem() const { return *problem_; }
  const OracleSpec& spec() const { return spec_; }

  Eigen::VectorXd bias(std::size_t client, const Eigen::VectorXd& x) const;
  // mu_i(x) = grad f_i(x) + b_{q,i}(x)
  Eigen::VectorXd mean_gradient(std::size_t client, const Eigen::VectorXd& x) const;
  // mu_{i,ZNE}(x) = grad f_i(x) + b_{q,i}(x) / kappa_b
  Eigen::VectorXd zne_mean_gradient(std::size_t client, const Eigen::VectorXd& x) const;

  // One draw of the raw (or ZNE-surrogate) oracle.
  Eigen::VectorXd sample(std::size_t client, const Eigen::VectorXd& x, bool zne,
                         RandomStream& stream) const;

  std::size_t dimension() const override { return problem_->dimension(); }
  fed::OracleGradient gradient(std::size_t client, std::span<const double> x,
                               std::span<const std::size_t> batch,
                               RandomStream& stream) const override;
  fed::OracleGradient zne_gradient(std::size_t client, std::span<const double> x,
                                   std::span<const std::size_t> batch,
                                   RandomStream& stream) const override;

  // Copy with all bias vectors and noise scales multiplied by c, bound to `problem`.
  SynthOracle scaled(const SynthProblem& problem, double c) const;

 private:
  const SynthProblem* problem_;
  OracleSpec spec_;
  std::vector<Eigen::VectorXd> bias_dirs_;    // unit vectors u_i
  std::vector<Eigen::VectorXd> bias_inputs_;  // w_i (saturating mode)
  std::vector<double> bias_offsets_;          // t_i (saturating mode)
  double scale_ = 1.0;
};

// A_i (x - b_i) + b_{q,i}(x) + noise with total variance sigma^2 + sigma_q^2,
// or the ZNE surrogate b/kappa_b and sigma^2 + kappa_v sigma_q^2.
Eigen::VectorXd synth_gradient(const SynthOracle& oracle, std::size_t client,
                               const Eigen::VectorXd& x, RandomStream& stream, bool zne = false);

struct FloorReport {
  fed::Algorithm algorithm = fed::Algorithm::FedAvg;
  std::size_t rounds = 0;
  double eta_tilde = 0.0;
  // Mean of ||grad f(x^r)||^2 over the final 20% of rounds.
  double plateau = 0.0;
  // |mean(first half) - mean(second half)| < 5% of the window mean, or the
  // window mean is numerically zero.
  bool plateaued = false;
  std::vector<double> grad_norm_sq;
  std::vector<double> gamma;      // (1/N) sum ||c_i - mu_i(x)||^2
  std::vector<double> gamma_zne;  // (1/N) sum ||c_{i,ZNE} - mu_{i,ZNE}(x)||^2
  std::vector<double> lambda;     // ||c_srv - (1/N) sum c_i||^2
  // ||c_srv - (1/N) sum c_{i,ZNE}||^2, identically 0 under full participation.
  std::vector<double> server_identity_gap;

  double window_mean(const std::vector<double>& series) const;
};

// Fraction of rounds used for the plateau window.
inline constexpr double kPlateauWindow = 0.2;
inline constexpr double kPlateauSlopeTolerance = 0.05;
// A window mean below this counts as converged to zero, hence plateaued.
inline constexpr double kConvergedFloor = 1e-12;

// Runs `cfg.algorithm` for `rounds` rounds from x = 0 (each client holds one
// batch, so K = local_epochs) and records the floor diagnostics.
FloorReport measure_floor(const SynthOracle& oracle, const fed::RoundConfig& cfg,
                          std::size_t rounds, std::uint64_t seed);

// Throws FloorNotReachedError when the slope test failed.
void require_plateau(const FloorReport& report);

// Gamma_r of the Q-ANCHOR client controls with the model frozen at x; only
// the control EMA runs. Index 0 is the initial (zero-control) error.
std::vector<double> frozen_control_errors(const SynthOracle& oracle, const fed::RoundConfig& cfg,
                                          const Eigen::VectorXd& x, std::size_t rounds,
                                          std::uint64_t seed);

nlohmann::json to_json(const FloorReport& report);

}  // namespace qfl::synth
