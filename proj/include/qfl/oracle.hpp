#pragma once

// Gradient oracles over the quantum classifier: ideal, hardware-noisy,
// finite-shot and ZNE-corrected parameter-shift gradients of the NLL loss.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "qfl/qsim.hpp"
#include "qfl/random.hpp"

namespace qfl::oracle {

inline constexpr double kProbabilityFloor = 1e-8;

class GradientMode {
 public:
  static GradientMode analytic() { return GradientMode(0); }
  static GradientMode with_shots(std::uint64_t shots);

  bool is_analytic() const { return shots_ == 0; }
  std::uint64_t shots() const { return shots_; }

  friend bool operator==(GradientMode, GradientMode) = default;

 private:
  explicit GradientMode(std::uint64_t shots) : shots_(shots) {}
  std::uint64_t shots_;
};

class NoiseLevel {
 public:
  NoiseLevel() = default;
  explicit NoiseLevel(double p);
  double p() const { return p_; }
  friend bool operator==(NoiseLevel, NoiseLevel) = default;

 private:
  double p_ = 0.0;
};

struct ZneConfig {
  std::vector<double> scale_factors{1.0, 3.0, 5.0};
  int degree = 2;
  // Clip scaled strengths at 1 instead of raising ScaleOverflowError.
  bool clip = true;

  void validate() const;
};

struct LabeledInput {
  qsim::Input input{};
  std::size_t label = 0;
};

struct GradientEstimate {
  std::vector<double> values;
  GradientMode mode = GradientMode::analytic();
  NoiseLevel noise;
  bool zne_applied = false;
  // Shifted circuit executions behind the estimate: 2 * 60 per sample and scale.
  std::uint64_t circuit_evals = 0;
};

// -log(max(p_label, 1e-8)), with p_label exact or shot-estimated.
double nll_loss(const qsim::CircuitParams& params, const LabeledInput& sample, NoiseLevel noise,
                GradientMode mode, RandomStream& stream);

// Parameter-shift NLL gradient averaged over the batch. Shifted circuits run at
// the same noise level; in shot mode every circuit gets an independent draw.
GradientEstimate grad_param_shift(const qsim::CircuitParams& params,
                                  std::span<const LabeledInput> batch, NoiseLevel noise,
                                  GradientMode mode, RandomStream& stream);

// Noiseless analytic gradient.
GradientEstimate grad_ideal(const qsim::CircuitParams& params,
                            std::span<const LabeledInput> batch);

// Lagrange weights at lambda = 0.
std::vector<double> zne_weights(const ZneConfig& config);

// sum_k gamma_k E(lambda_k)
double zne_extrapolate(std::span<const double> values_at_scales, const ZneConfig& config);

GradientEstimate grad_zne(const qsim::CircuitParams& params, std::span<const LabeledInput> batch,
                          NoiseLevel noise, GradientMode mode, const ZneConfig& config,
                          RandomStream& stream);

// |g - g_ideal| / |g_ideal|
double fractional_error(const GradientEstimate& estimate, const GradientEstimate& ideal);

// Total (summed over coordinates) sample variance of shot-mode gradients
// across `trials` independent evaluations.
double variance_probe(const qsim::CircuitParams& params, const LabeledInput& sample,
                      std::uint64_t shots, std::size_t trials, NoiseLevel noise,
                      RandomStream& stream);

}  // namespace qfl::oracle
