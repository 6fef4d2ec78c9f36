#include "qfl/synth.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <string>

#include "qfl/errors.hpp"

namespace qfl::synth {

namespace {

Eigen::VectorXd gaussian_vector(std::size_t d, RandomStream& stream) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(d));
  for (Eigen::Index k = 0; k < v.size(); ++k) v[k] = stream.normal();
  return v;
}

Eigen::VectorXd unit_vector(std::size_t d, RandomStream& stream) {
  Eigen::VectorXd v = gaussian_vector(d, stream);
  return v / v.norm();
}

Eigen::MatrixXd random_spd(std::size_t d, double lo, double hi, RandomStream& stream) {
  const auto n = static_cast<Eigen::Index>(d);
  Eigen::MatrixXd g(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    for (Eigen::Index c = 0; c < n; ++c) g(r, c) = stream.normal();
  }
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(g).householderQ();
  Eigen::VectorXd eig(n);
  for (Eigen::Index k = 0; k < n; ++k) eig[k] = lo + (hi - lo) * stream.uniform();
  Eigen::MatrixXd a = q * eig.asDiagonal() * q.transpose();
  return 0.5 * (a + a.transpose());
}

Eigen::VectorXd as_vector(std::span<const double> x) {
  return Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(x.size()));
}

fed::Vector to_std(const Eigen::VectorXd& v) { return fed::Vector(v.data(), v.data() + v.size()); }

}  // namespace

// --- SynthProblem -------------------------------------------------------------

SynthProblem SynthProblem::generate(const SynthSpec& spec) {
  if (spec.dimension == 0 || spec.n_clients == 0) {
    throw ConfigError("synth dimension and n_clients must be positive");
  }
  if (!(spec.curvature_min > 0.0 && spec.curvature_max >= spec.curvature_min)) {
    throw ConfigError("synth curvature range must satisfy 0 < min <= max");
  }
  if (!(spec.curvature_heterogeneity >= 0.0 && spec.curvature_heterogeneity <= 1.0)) {
    throw ConfigError("curvature_heterogeneity must lie in [0, 1]");
  }
  RandomStream stream = RandomStream::derive(spec.seed, {0x5e7});
  const Eigen::MatrixXd shared =
      random_spd(spec.dimension, spec.curvature_min, spec.curvature_max, stream);
  std::vector<Eigen::MatrixXd> curvatures;
  std::vector<Eigen::VectorXd> targets;
  const double h = spec.curvature_heterogeneity;
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(spec.dimension));
  for (std::size_t i = 0; i < spec.n_clients; ++i) {
    Eigen::MatrixXd own = random_spd(spec.dimension, spec.curvature_min, spec.curvature_max, stream);
    curvatures.push_back(h == 0.0 ? shared : Eigen::MatrixXd((1.0 - h) * shared + h * own));
    targets.push_back(spec.target_spread * inv_sqrt_d * gaussian_vector(spec.dimension, stream));
  }
  return SynthProblem(std::move(curvatures), std::move(targets));
}

SynthProblem::SynthProblem(std::vector<Eigen::MatrixXd> curvatures,
                           std::vector<Eigen::VectorXd> targets)
    : curvatures_(std::move(curvatures)), targets_(std::move(targets)) {
  if (curvatures_.empty() || curvatures_.size() != targets_.size()) {
    throw ConfigError("synth problem needs one curvature and target per client");
  }
}

double SynthProblem::smoothness() const {
  double beta = 0.0;
  for (const auto& a : curvatures_) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(a, Eigen::EigenvaluesOnly);
    beta = std::max(beta, solver.eigenvalues().cwiseAbs().maxCoeff());
  }
  return beta;
}

double SynthProblem::local_objective(std::size_t i, const Eigen::VectorXd& x) const {
  const Eigen::VectorXd r = x - targets_[i];
  return 0.5 * r.dot(curvatures_[i] * r);
}

Eigen::VectorXd SynthProblem::local_gradient(std::size_t i, const Eigen::VectorXd& x) const {
  return curvatures_[i] * (x - targets_[i]);
}

double SynthProblem::objective(const Eigen::VectorXd& x) const {
  double s = 0.0;
  for (std::size_t i = 0; i < n_clients(); ++i) s += local_objective(i, x);
  return s / static_cast<double>(n_clients());
}

Eigen::VectorXd SynthProblem::gradient(const Eigen::VectorXd& x) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(x.size());
  for (std::size_t i = 0; i < n_clients(); ++i) g += local_gradient(i, x);
  return g / static_cast<double>(n_clients());
}

Eigen::VectorXd SynthProblem::minimizer() const {
  const auto d = static_cast<Eigen::Index>(dimension());
  Eigen::MatrixXd a_sum = Eigen::MatrixXd::Zero(d, d);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(d);
  for (std::size_t i = 0; i < n_clients(); ++i) {
    a_sum += curvatures_[i];
    rhs += curvatures_[i] * targets_[i];
  }
  return a_sum.ldlt().solve(rhs);
}

SynthProblem SynthProblem::scaled(double c) const {
  std::vector<Eigen::MatrixXd> curv = curvatures_;
  for (auto& a : curv) a *= c;
  return SynthProblem(std::move(curv), targets_);
}

// --- SynthOracle --------------------------------------------------------------

void OracleSpec::validate() const {
  if (!(bias_norm >= 0.0)) throw ConfigError("bias norm U_q must be >= 0");
  if (!(sigma >= 0.0) || !(sigma_q >= 0.0)) throw ConfigError("noise scales must be >= 0");
  if (!(kappa_b >= 1.0)) throw ConfigError("kappa_b must be >= 1");
  if (!(kappa_v >= 1.0)) throw ConfigError("kappa_v must be >= 1");
  if (!(bias_lipschitz >= 0.0)) throw ConfigError("bias Lipschitz constant must be >= 0");
  if (!(bias_common_fraction >= 0.0 && bias_common_fraction <= 1.0)) {
    throw ConfigError("bias_common_fraction must lie in [0, 1]");
  }
}

SynthOracle::SynthOracle(const SynthProblem& problem, const OracleSpec& spec)
    : problem_(&problem), spec_(spec) {
  spec_.validate();
  const std::size_t d = problem.dimension();
  RandomStream stream = RandomStream::derive(spec.seed, {0xb1a5});
  const Eigen::VectorXd common = unit_vector(d, stream);
  for (std::size_t i = 0; i < problem.n_clients(); ++i) {
    Eigen::VectorXd dir = spec.bias_common_fraction * common +
                          (1.0 - spec.bias_common_fraction) * unit_vector(d, stream);
    if (dir.norm() == 0.0) dir = common;
    bias_dirs_.push_back(dir / dir.norm());
    bias_inputs_.push_back(unit_vector(d, stream));
    bias_offsets_.push_back(2.0 * stream.uniform() - 1.0);
  }
}

Eigen::VectorXd SynthOracle::bias(std::size_t client, const Eigen::VectorXd& x) const {
  const double u = spec_.bias_norm * scale_;
  if (spec_.bias_mode == BiasMode::Constant || spec_.bias_norm == 0.0) {
    return u * bias_dirs_[client];
  }
  const double slope = spec_.bias_lipschitz / spec_.bias_norm;
  return u * std::tanh(slope * bias_inputs_[client].dot(x) + bias_offsets_[client]) *
         bias_dirs_[client];
}

Eigen::VectorXd SynthOracle::mean_gradient(std::size_t client, const Eigen::VectorXd& x) const {
  return problem_->local_gradient(client, x) + bias(client, x);
}

Eigen::VectorXd SynthOracle::zne_mean_gradient(std::size_t client,
                                               const Eigen::VectorXd& x) const {
  return problem_->local_gradient(client, x) + bias(client, x) / spec_.kappa_b;
}

Eigen::VectorXd SynthOracle::sample(std::size_t client, const Eigen::VectorXd& x, bool zne,
                                    RandomStream& stream) const {
  const double shot_var = zne ? spec_.kappa_v * spec_.sigma_q * spec_.sigma_q
                              : spec_.sigma_q * spec_.sigma_q;
  const double total_var = (spec_.sigma * spec_.sigma + shot_var) * scale_ * scale_;
  Eigen::VectorXd g = zne ? zne_mean_gradient(client, x) : mean_gradient(client, x);
  if (total_var > 0.0) {
    const double coord_std = std::sqrt(total_var / static_cast<double>(g.size()));
    for (Eigen::Index k = 0; k < g.size(); ++k) g[k] += coord_std * stream.normal();
  }
  return g;
}

fed::OracleGradient SynthOracle::gradient(std::size_t client, std::span<const double> x,
                                          std::span<const std::size_t>,
                                          RandomStream& stream) const {
  return {to_std(sample(client, as_vector(x), false, stream)), 1};
}

fed::OracleGradient SynthOracle::zne_gradient(std::size_t client, std::span<const double> x,
                                              std::span<const std::size_t>,
                                              RandomStream& stream) const {
  return {to_std(sample(client, as_vector(x), true, stream)), 1};
}

SynthOracle SynthOracle::scaled(const SynthProblem& problem, double c) const {
  SynthOracle copy = *this;
  copy.problem_ = &problem;
  copy.scale_ = scale_ * c;
  return copy;
}

Eigen::VectorXd synth_gradient(const SynthOracle& oracle, std::size_t client,
                               const Eigen::VectorXd& x, RandomStream& stream, bool zne) {
  if (client >= oracle.problem().n_clients()) throw ConfigError("client index out of range");
  return oracle.sample(client, x, zne, stream);
}

// --- floor measurement --------------------------------------------------------

double FloorReport::window_mean(const std::vector<double>& series) const {
  if (series.empty()) return 0.0;
  const std::size_t len = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::lround(kPlateauWindow * static_cast<double>(series.size()))));
  double s = 0.0;
  for (std::size_t k = series.size() - len; k < series.size(); ++k) s += series[k];
  return s / static_cast<double>(len);
}

FloorReport measure_floor(const SynthOracle& oracle, const fed::RoundConfig& cfg,
                          std::size_t rounds, std::uint64_t seed) {
  const SynthProblem& problem = oracle.problem();
  if (cfg.n_clients != problem.n_clients()) {
    throw ConfigError("round config n_clients does not match the synth problem");
  }
  const std::size_t n = problem.n_clients();
  std::vector<std::vector<std::size_t>> shards(n);
  for (auto& s : shards) {
    s.resize(cfg.batch_size);
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = k;
  }
  const std::vector<std::size_t> sizes(n, cfg.batch_size);

  FloorReport report;
  report.algorithm = cfg.algorithm;
  report.rounds = rounds;
  report.eta_tilde = fed::effective_stepsize(cfg, sizes);

  auto observe = [&](const fed::TrainingState& state) {
    const Eigen::VectorXd x = as_vector(state.server.x);
    report.grad_norm_sq.push_back(problem.gradient(x).squaredNorm());
    const auto d = x.size();
    double gamma = 0.0, gamma_zne = 0.0;
    Eigen::VectorXd mean_c = Eigen::VectorXd::Zero(d);
    Eigen::VectorXd mean_cz = Eigen::VectorXd::Zero(d);
    for (const fed::ClientState& c : state.clients) {
      const Eigen::VectorXd ci = as_vector(c.control);
      const Eigen::VectorXd cz = as_vector(c.zne_control);
      gamma += (ci - oracle.mean_gradient(c.id, x)).squaredNorm();
      gamma_zne += (cz - oracle.zne_mean_gradient(c.id, x)).squaredNorm();
      mean_c += ci;
      mean_cz += cz;
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    report.gamma.push_back(gamma * inv_n);
    report.gamma_zne.push_back(gamma_zne * inv_n);
    const Eigen::VectorXd srv = as_vector(state.server.control);
    report.lambda.push_back((srv - mean_c * inv_n).squaredNorm());
    report.server_identity_gap.push_back((srv - mean_cz * inv_n).squaredNorm());
  };

  fed::TrainingOptions options;
  options.rounds = rounds;
  options.seed = seed;
  fed::run_training(cfg, std::move(shards), fed::Vector(problem.dimension(), 0.0), oracle, options,
                    observe);

  report.plateau = report.window_mean(report.grad_norm_sq);
  const auto& g = report.grad_norm_sq;
  const std::size_t len =
      g.empty() ? 0
                : std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(
                                               kPlateauWindow * static_cast<double>(g.size()))));
  if (len >= 2) {
    const std::size_t start = g.size() - len;
    const std::size_t half = len / 2;
    double first = 0.0, second = 0.0;
    for (std::size_t k = 0; k < half; ++k) first += g[start + k];
    for (std::size_t k = half; k < len; ++k) second += g[start + k];
    first /= static_cast<double>(half);
    second /= static_cast<double>(len - half);
    const double diff = std::abs(first - second);
    report.plateaued = diff <= kPlateauSlopeTolerance * report.plateau || report.plateau < kConvergedFloor;
  }
  return report;
}

void require_plateau(const FloorReport& report) {
  if (!report.plateaued) {
    throw FloorNotReachedError(std::string(fed::to_string(report.algorithm)) +
                               " run did not plateau within " + std::to_string(report.rounds) +
                               " rounds");
  }
}

std::vector<double> frozen_control_errors(const SynthOracle& oracle, const fed::RoundConfig& cfg,
                                          const Eigen::VectorXd& x, std::size_t rounds,
                                          std::uint64_t seed) {
  const SynthProblem& problem = oracle.problem();
  const std::size_t n = problem.n_clients();
  const std::size_t d = problem.dimension();
  std::vector<fed::ClientState> clients(n);
  std::vector<Eigen::VectorXd> targets(n);
  for (std::size_t i = 0; i < n; ++i) {
    clients[i].id = i;
    clients[i].control.assign(d, 0.0);
    clients[i].zne_control.assign(d, 0.0);
    clients[i].shard = {0};
    targets[i] = oracle.mean_gradient(i, x);
  }
  auto gamma = [&] {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (as_vector(clients[i].control) - targets[i]).squaredNorm();
    return s / static_cast<double>(n);
  };
  const fed::Vector anchor = to_std(x);
  std::vector<double> out{gamma()};
  for (std::size_t r = 1; r <= rounds; ++r) {
    RandomStream sampler = RandomStream::derive(seed, {r, 0x5a3e1});
    for (std::size_t id : fed::sample_clients(n, cfg.sample_size, sampler)) {
      RandomStream ctl = RandomStream::derive(seed, {r, id, 1});
      fed::ControlUpdate u = fed::qanchor_control_updates(clients[id], anchor, cfg, oracle, ctl);
      clients[id].control = std::move(u.control);
      clients[id].zne_control = std::move(u.zne_control);
    }
    out.push_back(gamma());
  }
  return out;
}

nlohmann::json to_json(const FloorReport& report) {
  nlohmann::json j;
  j["algorithm"] = std::string(fed::to_string(report.algorithm));
  j["rounds"] = report.rounds;
  j["eta_tilde"] = report.eta_tilde;
  j["plateau"] = report.plateau;
  j["plateaued"] = report.plateaued;
  j["grad_norm_sq"] = report.grad_norm_sq;
  j["gamma"] = report.gamma;
  j["gamma_zne"] = report.gamma_zne;
  j["lambda"] = report.lambda;
  j["server_identity_gap"] = report.server_identity_gap;
  return j;
}

}  // namespace qfl::synth
