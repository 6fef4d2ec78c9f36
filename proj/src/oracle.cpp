#include "qfl/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qfl/errors.hpp"

namespace qfl::oracle {

using qsim::ClassProbabilities;
using qsim::DensityMatrix;
using qsim::kClasses;
using qsim::kNumParams;

GradientMode GradientMode::with_shots(std::uint64_t shots) {
  if (shots == 0) throw ConfigError("shot count must be at least 1");
  return GradientMode(shots);
}

NoiseLevel::NoiseLevel(double p) : p_(p) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ChannelError("noise level " + std::to_string(p) + " outside [0, 1]");
  }
}

void ZneConfig::validate() const {
  if (scale_factors.empty()) throw ZneConfigError("ZNE needs at least one scale factor");
  if (degree < 0 || static_cast<std::size_t>(degree) + 1 != scale_factors.size()) {
    throw ZneConfigError("ZNE degree + 1 must equal the number of scale factors");
  }
  for (std::size_t k = 0; k < scale_factors.size(); ++k) {
    if (!std::isfinite(scale_factors[k]) || scale_factors[k] < 1.0) {
      throw ZneConfigError("ZNE scale factors must be finite and >= 1");
    }
    for (std::size_t j = 0; j < k; ++j) {
      if (scale_factors[j] == scale_factors[k]) {
        throw ZneConfigError("duplicate ZNE scale factor " + std::to_string(scale_factors[k]));
      }
    }
  }
}

namespace {

// Class probabilities of the unshifted circuit and of every +-pi/2 shifted
// circuit. Shifted values are tr(O_j R_j(theta_j +- pi/2) rho_j R^dag), where
// rho_j is the state entering rotation j and O_j the class projector pulled
// back through the rest of the circuit. Numerically this is the same quantity
// as re-running the full shifted circuit.
struct ShiftTable {
  ClassProbabilities base{};
  std::array<ClassProbabilities, kNumParams> plus{};
  std::array<ClassProbabilities, kNumParams> minus{};
};

ShiftTable shift_table(const qsim::CircuitParams& params, const qsim::Input& input, double noise,
                       std::span<const std::size_t> classes) {
  const std::vector<qsim::Gate> gates = qsim::compile_circuit(params, qsim::CircuitSpec::with_noise(noise));

  // Scratch reused across calls; fresh 100 KB+ buffers per sample cost more
  // in page faults than the arithmetic.
  thread_local std::vector<DensityMatrix> entering;
  thread_local std::vector<DensityMatrix> pulled;
  entering.resize(kNumParams);
  pulled.resize(classes.size() * kNumParams);
  DensityMatrix rho = qsim::amplitude_embed(input);
  for (const qsim::Gate& g : gates) {
    if (g.param >= 0) entering[static_cast<std::size_t>(g.param)] = rho;
    qsim::apply_gate(rho, g);
  }

  ShiftTable table;
  table.base = qsim::class_probabilities(rho);

  for (std::size_t ci = 0; ci < classes.size(); ++ci) {
    DensityMatrix obs = qsim::class_projector(classes[ci]);
    for (auto it = gates.rbegin(); it != gates.rend(); ++it) {
      if (it->param >= 0) pulled[ci * kNumParams + static_cast<std::size_t>(it->param)] = obs;
      qsim::apply_gate_adjoint(obs, *it);
    }
  }

  constexpr double kShift = std::numbers::pi / 2.0;
  for (const qsim::Gate& g : gates) {
    if (g.param < 0) continue;
    const auto j = static_cast<std::size_t>(g.param);
    DensityMatrix up = entering[j];
    DensityMatrix down = entering[j];
    qsim::rotate_inplace(up, g.q0, g.axis, g.value + kShift);
    qsim::rotate_inplace(down, g.q0, g.axis, g.value - kShift);
    for (std::size_t ci = 0; ci < classes.size(); ++ci) {
      const DensityMatrix& obs = pulled[ci * kNumParams + j];
      table.plus[j][classes[ci]] = std::max(obs.overlap(up), 0.0);
      table.minus[j][classes[ci]] = std::max(obs.overlap(down), 0.0);
    }
  }
  return table;
}

constexpr std::array<std::size_t, kClasses> kAllClasses = {0, 1, 2, 3, 4, 5, 6, 7};

double estimate(const ClassProbabilities& probs, std::size_t label, GradientMode mode,
                RandomStream& stream) {
  if (mode.is_analytic()) return probs[label];
  const auto counts = qsim::sample_counts(probs, mode.shots(), stream);
  return static_cast<double>(counts[label]) / static_cast<double>(mode.shots());
}

void accumulate_sample_gradient(const qsim::CircuitParams& params, const LabeledInput& sample,
                                double noise, GradientMode mode, RandomStream& stream,
                                std::span<double> out) {
  if (sample.label >= kClasses) throw ConfigError("label out of range");
  const std::array<std::size_t, 1> only_label = {sample.label};
  const ShiftTable table =
      mode.is_analytic() ? shift_table(params, sample.input, noise, only_label)
                         : shift_table(params, sample.input, noise, kAllClasses);

  const double p = estimate(table.base, sample.label, mode, stream);
  const double inv = 1.0 / std::max(p, kProbabilityFloor);
  for (std::size_t j = 0; j < kNumParams; ++j) {
    const double up = estimate(table.plus[j], sample.label, mode, stream);
    const double down = estimate(table.minus[j], sample.label, mode, stream);
    out[j] += -inv * 0.5 * (up - down);
  }
}

}  // namespace

double nll_loss(const qsim::CircuitParams& params, const LabeledInput& sample, NoiseLevel noise,
                GradientMode mode, RandomStream& stream) {
  if (sample.label >= kClasses) throw ConfigError("label out of range");
  const DensityMatrix rho =
      qsim::run_circuit(params, sample.input, qsim::CircuitSpec::with_noise(noise.p()));
  const double p = estimate(qsim::class_probabilities(rho), sample.label, mode, stream);
  return -std::log(std::max(p, kProbabilityFloor));
}

GradientEstimate grad_param_shift(const qsim::CircuitParams& params,
                                  std::span<const LabeledInput> batch, NoiseLevel noise,
                                  GradientMode mode, RandomStream& stream) {
  if (batch.empty()) throw ConfigError("gradient batch must be nonempty");
  GradientEstimate est;
  est.values.assign(kNumParams, 0.0);
  est.mode = mode;
  est.noise = noise;
  for (const LabeledInput& sample : batch) {
    accumulate_sample_gradient(params, sample, noise.p(), mode, stream, est.values);
  }
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (double& v : est.values) v *= scale;
  est.circuit_evals = 2 * kNumParams * batch.size();
  return est;
}

GradientEstimate grad_ideal(const qsim::CircuitParams& params,
                            std::span<const LabeledInput> batch) {
  RandomStream unused(0);
  return grad_param_shift(params, batch, NoiseLevel(0.0), GradientMode::analytic(), unused);
}

std::vector<double> zne_weights(const ZneConfig& config) {
  config.validate();
  const auto& lambda = config.scale_factors;
  std::vector<double> gamma(lambda.size(), 1.0);
  for (std::size_t k = 0; k < lambda.size(); ++k) {
    for (std::size_t j = 0; j < lambda.size(); ++j) {
      if (j != k) gamma[k] *= (0.0 - lambda[j]) / (lambda[k] - lambda[j]);
    }
  }
  return gamma;
}

double zne_extrapolate(std::span<const double> values_at_scales, const ZneConfig& config) {
  const std::vector<double> gamma = zne_weights(config);
  if (values_at_scales.size() != gamma.size()) {
    throw ZneConfigError("expected one value per scale factor");
  }
  double s = 0.0;
  for (std::size_t k = 0; k < gamma.size(); ++k) s += gamma[k] * values_at_scales[k];
  return s;
}

GradientEstimate grad_zne(const qsim::CircuitParams& params, std::span<const LabeledInput> batch,
                          NoiseLevel noise, GradientMode mode, const ZneConfig& config,
                          RandomStream& stream) {
  const std::vector<double> gamma = zne_weights(config);
  GradientEstimate out;
  out.values.assign(kNumParams, 0.0);
  out.mode = mode;
  out.noise = noise;
  out.zne_applied = true;
  for (std::size_t k = 0; k < gamma.size(); ++k) {
    double scaled = config.scale_factors[k] * noise.p();
    if (scaled > 1.0) {
      if (!config.clip) {
        throw ScaleOverflowError("scaled noise strength " + std::to_string(scaled) +
                                 " exceeds 1");
      }
      scaled = 1.0;
    }
    const GradientEstimate g = grad_param_shift(params, batch, NoiseLevel(scaled), mode, stream);
    for (std::size_t j = 0; j < kNumParams; ++j) out.values[j] += gamma[k] * g.values[j];
    out.circuit_evals += g.circuit_evals;
  }
  return out;
}

double fractional_error(const GradientEstimate& estimate, const GradientEstimate& ideal) {
  if (estimate.values.size() != ideal.values.size()) {
    throw ConfigError("gradient dimension mismatch");
  }
  double diff2 = 0.0, ref2 = 0.0;
  for (std::size_t j = 0; j < ideal.values.size(); ++j) {
    const double d = estimate.values[j] - ideal.values[j];
    diff2 += d * d;
    ref2 += ideal.values[j] * ideal.values[j];
  }
  const double ref = std::sqrt(ref2);
  if (ref <= 1e-12) throw DegenerateReferenceError("reference gradient norm is ~0");
  return std::sqrt(diff2) / ref;
}

double variance_probe(const qsim::CircuitParams& params, const LabeledInput& sample,
                      std::uint64_t shots, std::size_t trials, NoiseLevel noise,
                      RandomStream& stream) {
  if (trials < 2) throw ConfigError("variance probe needs at least 2 trials");
  if (shots == 0) return 0.0;
  const GradientMode mode = GradientMode::with_shots(shots);
  std::vector<double> mean(kNumParams, 0.0), m2(kNumParams, 0.0);
  const std::array<LabeledInput, 1> batch = {sample};
  for (std::size_t t = 0; t < trials; ++t) {
    const GradientEstimate g = grad_param_shift(params, batch, noise, mode, stream);
    // Welford
    const double n = static_cast<double>(t + 1);
    for (std::size_t j = 0; j < kNumParams; ++j) {
      const double delta = g.values[j] - mean[j];
      mean[j] += delta / n;
      m2[j] += delta * (g.values[j] - mean[j]);
    }
  }
  double total = 0.0;
  for (double v : m2) total += v / static_cast<double>(trials - 1);
  return total;
}

}  // namespace qfl::oracle
