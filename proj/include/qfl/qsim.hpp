#pragma once

// Exact density-matrix simulation of the 4-qubit variational classifier:
// amplitude embedding, 5 strongly entangling layers (Rot + CNOT ring) and
// per-qubit depolarizing channels after every layer.
//
// Qubit 0 is the most significant bit of a basis index, so |1000> is index 8.

#include <array>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "qfl/random.hpp"

namespace qfl::qsim {

inline constexpr std::size_t kQubits = 4;
inline constexpr std::size_t kDim = 16;
inline constexpr std::size_t kClasses = 8;
inline constexpr std::size_t kLayers = 5;
inline constexpr std::size_t kRotationsPerQubit = 3;
inline constexpr std::size_t kNumParams = kLayers * kQubits * kRotationsPerQubit;

using Complex = std::complex<double>;
using Input = std::array<double, kDim>;
using ClassProbabilities = std::array<double, kClasses>;
using ClassCounts = std::array<std::uint64_t, kClasses>;

class DensityMatrix {
 public:
  // |0000><0000|
  DensityMatrix() { m_[0] = 1.0; }

  static DensityMatrix zero() {
    DensityMatrix rho;
    rho.m_[0] = 0.0;
    return rho;
  }
  static DensityMatrix maximally_mixed();
  static DensityMatrix basis_state(std::size_t index);
  // |psi><psi| for an already-normalized amplitude vector.
  static DensityMatrix from_pure(std::span<const Complex> amplitudes);

  static constexpr std::size_t dim() { return kDim; }

  Complex& operator()(std::size_t row, std::size_t col) { return m_[row * kDim + col]; }
  const Complex& operator()(std::size_t row, std::size_t col) const {
    return m_[row * kDim + col];
  }

  double trace() const;
  // tr(rho^2)
  double purity() const;
  // max |rho_ij - conj(rho_ji)|
  double hermiticity_error() const;
  double min_eigenvalue() const;
  // Re tr(A B) for Hermitian A, B.
  double overlap(const DensityMatrix& other) const;

  std::span<Complex> data() { return m_; }
  std::span<const Complex> data() const { return m_; }

 private:
  std::array<Complex, kDim * kDim> m_{};
};

enum class Axis { X, Y, Z };

// Rotation slot inside one Rot gate; applied z1, then y, then z2.
enum class RotSlot : std::size_t { Z1 = 0, Y = 1, Z2 = 2 };

struct CircuitSpec {
  std::size_t n_qubits = kQubits;
  std::size_t n_layers = kLayers;
  std::vector<std::pair<std::size_t, std::size_t>> entangler_ring = default_ring();
  double noise = 0.0;  // depolarizing strength p per qubit per layer

  static std::vector<std::pair<std::size_t, std::size_t>> default_ring();
  static CircuitSpec with_noise(double p) {
    CircuitSpec spec;
    spec.noise = p;
    return spec;
  }
  std::size_t num_params() const { return n_layers * n_qubits * kRotationsPerQubit; }
  void validate() const;
};

class CircuitParams {
 public:
  CircuitParams() = default;
  explicit CircuitParams(std::span<const double> angles);

  static constexpr std::size_t index(std::size_t layer, std::size_t qubit, RotSlot slot) {
    return (layer * kQubits + qubit) * kRotationsPerQubit + static_cast<std::size_t>(slot);
  }
  // Uniform angles in [0, 2pi).
  static CircuitParams random(RandomStream& stream);

  double& operator[](std::size_t i) { return angles_[i]; }
  double operator[](std::size_t i) const { return angles_[i]; }
  double angle(std::size_t layer, std::size_t qubit, RotSlot slot) const {
    return angles_[index(layer, qubit, slot)];
  }
  static constexpr std::size_t size() { return kNumParams; }

  std::span<const double> values() const { return angles_; }
  std::span<double> values() { return angles_; }

  friend bool operator==(const CircuitParams&, const CircuitParams&) = default;

 private:
  std::array<double, kNumParams> angles_{};
};

// Zero input: falls back to e0 with a warning when `zero_fallback` is set,
// otherwise throws EmbeddingError.
DensityMatrix amplitude_embed(std::span<const double> input, bool zero_fallback = true);

DensityMatrix apply_rotation(DensityMatrix rho, std::size_t qubit, Axis axis, double angle);
DensityMatrix apply_cnot(DensityMatrix rho, std::size_t control, std::size_t target);
// (1 - s) rho + s (I/2 (x) tr_q rho)
DensityMatrix apply_depolarizing(DensityMatrix rho, std::size_t qubit, double strength);

DensityMatrix run_circuit(const CircuitParams& params, std::span<const double> input,
                          const CircuitSpec& spec);

// Marginal over the last qubit: P(c) = <c0|rho|c0> + <c1|rho|c1>.
ClassProbabilities class_probabilities(const DensityMatrix& rho);

// One categorical draw per shot.
ClassCounts sample_class_counts(const DensityMatrix& rho, std::uint64_t shots,
                                RandomStream& stream);
ClassCounts sample_counts(const ClassProbabilities& probs, std::uint64_t shots,
                          RandomStream& stream);

// --- gate-level interface used by the gradient engine -----------------------

struct Gate {
  enum class Kind { Rotation, Cnot, Depolarizing };
  Kind kind = Kind::Rotation;
  Axis axis = Axis::Z;
  std::size_t q0 = 0;
  std::size_t q1 = 0;
  double value = 0.0;  // angle or channel strength
  int param = -1;      // index into CircuitParams for rotations
};

std::vector<Gate> compile_circuit(const CircuitParams& params, const CircuitSpec& spec);

void apply_gate(DensityMatrix& rho, const Gate& gate);
// Heisenberg-picture action: tr(O E(rho)) == tr(E^dag(O) rho).
void apply_gate_adjoint(DensityMatrix& observable, const Gate& gate);

void rotate_inplace(DensityMatrix& rho, std::size_t qubit, Axis axis, double angle);
void cnot_inplace(DensityMatrix& rho, std::size_t control, std::size_t target);
void depolarize_inplace(DensityMatrix& rho, std::size_t qubit, double strength);

// Projector onto the two basis states of class c.
DensityMatrix class_projector(std::size_t cls);

}  // namespace qfl::qsim
