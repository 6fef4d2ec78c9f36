#include "qfl/qsim.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <string>

#include "qfl/errors.hpp"

namespace qfl::qsim {

namespace {

constexpr std::size_t mask_of(std::size_t qubit) { return std::size_t{1} << (kQubits - 1 - qubit); }

void check_qubit(std::size_t qubit) {
  if (qubit >= kQubits) {
    throw GateError("qubit index " + std::to_string(qubit) + " out of range");
  }
}

// rho <- U rho U^dag for a single-qubit U = [[u00, u01], [u10, u11]].
void conjugate_1q(DensityMatrix& rho, std::size_t qubit, Complex u00, Complex u01, Complex u10,
                  Complex u11) {
  const std::size_t mask = mask_of(qubit);
  auto m = rho.data();
  for (std::size_t a = 0; a < kDim; ++a) {
    if (a & mask) continue;
    const std::size_t b = a | mask;
    for (std::size_t j = 0; j < kDim; ++j) {
      const Complex r0 = m[a * kDim + j];
      const Complex r1 = m[b * kDim + j];
      m[a * kDim + j] = u00 * r0 + u01 * r1;
      m[b * kDim + j] = u10 * r0 + u11 * r1;
    }
  }
  const Complex v00 = std::conj(u00), v01 = std::conj(u01);
  const Complex v10 = std::conj(u10), v11 = std::conj(u11);
  for (std::size_t i = 0; i < kDim; ++i) {
    Complex* row = &m[i * kDim];
    for (std::size_t a = 0; a < kDim; ++a) {
      if (a & mask) continue;
      const std::size_t b = a | mask;
      const Complex c0 = row[a];
      const Complex c1 = row[b];
      row[a] = c0 * v00 + c1 * v01;
      row[b] = c0 * v10 + c1 * v11;
    }
  }
}

// Real rotation [[c, -s], [s, c]]; both sides share the same update.
void conjugate_ry(DensityMatrix& rho, std::size_t qubit, double c, double s) {
  const std::size_t mask = mask_of(qubit);
  auto m = rho.data();
  for (std::size_t a = 0; a < kDim; ++a) {
    if (a & mask) continue;
    const std::size_t b = a | mask;
    for (std::size_t j = 0; j < kDim; ++j) {
      const Complex r0 = m[a * kDim + j];
      const Complex r1 = m[b * kDim + j];
      m[a * kDim + j] = c * r0 - s * r1;
      m[b * kDim + j] = s * r0 + c * r1;
    }
  }
  for (std::size_t i = 0; i < kDim; ++i) {
    Complex* row = &m[i * kDim];
    for (std::size_t a = 0; a < kDim; ++a) {
      if (a & mask) continue;
      const std::size_t b = a | mask;
      const Complex c0 = row[a];
      const Complex c1 = row[b];
      row[a] = c * c0 - s * c1;
      row[b] = s * c0 + c * c1;
    }
  }
}

void conjugate_rz(DensityMatrix& rho, std::size_t qubit, double angle) {
  const std::size_t mask = mask_of(qubit);
  const Complex down = std::polar(1.0, -angle);  // row bit 0, col bit 1
  const Complex up = std::polar(1.0, angle);     // row bit 1, col bit 0
  auto m = rho.data();
  for (std::size_t i = 0; i < kDim; ++i) {
    for (std::size_t j = 0; j < kDim; ++j) {
      const bool bi = i & mask;
      const bool bj = j & mask;
      if (bi == bj) continue;
      m[i * kDim + j] *= bi ? up : down;
    }
  }
}

}  // namespace

// --- DensityMatrix ----------------------------------------------------------

DensityMatrix DensityMatrix::maximally_mixed() {
  DensityMatrix rho = zero();
  for (std::size_t i = 0; i < kDim; ++i) rho(i, i) = 1.0 / kDim;
  return rho;
}

DensityMatrix DensityMatrix::basis_state(std::size_t index) {
  DensityMatrix rho = zero();
  rho(index, index) = 1.0;
  return rho;
}

DensityMatrix DensityMatrix::from_pure(std::span<const Complex> amplitudes) {
  DensityMatrix rho = zero();
  for (std::size_t i = 0; i < kDim; ++i) {
    for (std::size_t j = 0; j < kDim; ++j) {
      rho(i, j) = amplitudes[i] * std::conj(amplitudes[j]);
    }
  }
  return rho;
}

double DensityMatrix::trace() const {
  double t = 0.0;
  for (std::size_t i = 0; i < kDim; ++i) t += m_[i * kDim + i].real();
  return t;
}

double DensityMatrix::purity() const {
  // tr(rho^2) = sum_ij |rho_ij|^2 for Hermitian rho.
  double s = 0.0;
  for (const Complex& z : m_) s += std::norm(z);
  return s;
}

double DensityMatrix::hermiticity_error() const {
  double worst = 0.0;
  for (std::size_t i = 0; i < kDim; ++i) {
    for (std::size_t j = i; j < kDim; ++j) {
      worst = std::max(worst, std::abs((*this)(i, j) - std::conj((*this)(j, i))));
    }
  }
  return worst;
}

double DensityMatrix::min_eigenvalue() const {
  Eigen::Matrix<Complex, kDim, kDim> mat;
  for (std::size_t i = 0; i < kDim; ++i) {
    for (std::size_t j = 0; j < kDim; ++j) mat(i, j) = (*this)(i, j);
  }
  Eigen::SelfAdjointEigenSolver<decltype(mat)> solver(mat, Eigen::EigenvaluesOnly);
  return solver.eigenvalues().minCoeff();
}

double DensityMatrix::overlap(const DensityMatrix& other) const {
  // Re sum_ij A_ij B_ji
  double s = 0.0;
  for (std::size_t i = 0; i < kDim; ++i) {
    for (std::size_t j = 0; j < kDim; ++j) {
      const Complex& a = m_[i * kDim + j];
      const Complex& b = other.m_[j * kDim + i];
      s += a.real() * b.real() - a.imag() * b.imag();
    }
  }
  return s;
}

// --- circuit description ----------------------------------------------------

std::vector<std::pair<std::size_t, std::size_t>> CircuitSpec::default_ring() {
  std::vector<std::pair<std::size_t, std::size_t>> ring;
  for (std::size_t q = 0; q < kQubits; ++q) ring.emplace_back(q, (q + 1) % kQubits);
  return ring;
}

void CircuitSpec::validate() const {
  if (n_qubits != kQubits || n_layers != kLayers) {
    throw GateError("circuit must have 4 qubits and 5 layers");
  }
  for (const auto& [c, t] : entangler_ring) {
    if (c >= n_qubits || t >= n_qubits || c == t) {
      throw GateError("invalid entangler pair (" + std::to_string(c) + ", " + std::to_string(t) +
                      ")");
    }
  }
  if (!(noise >= 0.0 && noise <= 1.0)) {
    throw ChannelError("noise strength must lie in [0, 1]");
  }
}

CircuitParams::CircuitParams(std::span<const double> angles) {
  if (angles.size() != kNumParams) {
    throw GateError("expected " + std::to_string(kNumParams) + " circuit parameters, got " +
                    std::to_string(angles.size()));
  }
  std::copy(angles.begin(), angles.end(), angles_.begin());
}

CircuitParams CircuitParams::random(RandomStream& stream) {
  CircuitParams params;
  for (double& a : params.angles_) a = 2.0 * std::numbers::pi * stream.uniform();
  return params;
}

std::vector<Gate> compile_circuit(const CircuitParams& params, const CircuitSpec& spec) {
  spec.validate();
  std::vector<Gate> gates;
  gates.reserve(spec.n_layers * (spec.n_qubits * 4 + spec.entangler_ring.size()));
  constexpr std::array<std::pair<RotSlot, Axis>, 3> kRot = {
      std::pair{RotSlot::Z1, Axis::Z}, std::pair{RotSlot::Y, Axis::Y},
      std::pair{RotSlot::Z2, Axis::Z}};
  for (std::size_t layer = 0; layer < spec.n_layers; ++layer) {
    for (std::size_t q = 0; q < spec.n_qubits; ++q) {
      for (const auto& [slot, axis] : kRot) {
        const std::size_t idx = CircuitParams::index(layer, q, slot);
        gates.push_back(Gate{Gate::Kind::Rotation, axis, q, 0, params[idx], static_cast<int>(idx)});
      }
    }
    for (const auto& [c, t] : spec.entangler_ring) {
      gates.push_back(Gate{Gate::Kind::Cnot, Axis::Z, c, t, 0.0, -1});
    }
    if (spec.noise > 0.0) {
      for (std::size_t q = 0; q < spec.n_qubits; ++q) {
        gates.push_back(Gate{Gate::Kind::Depolarizing, Axis::Z, q, 0, spec.noise, -1});
      }
    }
  }
  return gates;
}

// --- in-place kernels -------------------------------------------------------

void rotate_inplace(DensityMatrix& rho, std::size_t qubit, Axis axis, double angle) {
  check_qubit(qubit);
  const double c = std::cos(angle / 2.0);
  const double s = std::sin(angle / 2.0);
  switch (axis) {
    case Axis::X:
      conjugate_1q(rho, qubit, c, Complex(0.0, -s), Complex(0.0, -s), c);
      break;
    case Axis::Y:
      conjugate_ry(rho, qubit, c, s);
      break;
    case Axis::Z:
      conjugate_rz(rho, qubit, angle);
      break;
  }
}

void cnot_inplace(DensityMatrix& rho, std::size_t control, std::size_t target) {
  check_qubit(control);
  check_qubit(target);
  if (control == target) throw GateError("CNOT control and target must differ");
  const std::size_t cmask = mask_of(control);
  const std::size_t tmask = mask_of(target);
  std::array<std::size_t, kDim> perm{};
  for (std::size_t i = 0; i < kDim; ++i) perm[i] = (i & cmask) ? (i ^ tmask) : i;
  const DensityMatrix src = rho;
  for (std::size_t i = 0; i < kDim; ++i) {
    for (std::size_t j = 0; j < kDim; ++j) rho(i, j) = src(perm[i], perm[j]);
  }
}

void depolarize_inplace(DensityMatrix& rho, std::size_t qubit, double strength) {
  check_qubit(qubit);
  if (!(strength >= 0.0 && strength <= 1.0)) {
    throw ChannelError("depolarizing strength " + std::to_string(strength) +
                       " outside [0, 1]");
  }
  if (strength == 0.0) return;
  const std::size_t mask = mask_of(qubit);
  const double keep = 1.0 - strength;
  const double half = strength / 2.0;
  for (std::size_t i0 = 0; i0 < kDim; ++i0) {
    if (i0 & mask) continue;
    const std::size_t i1 = i0 | mask;
    for (std::size_t j0 = 0; j0 < kDim; ++j0) {
      if (j0 & mask) continue;
      const std::size_t j1 = j0 | mask;
      const Complex t = rho(i0, j0) + rho(i1, j1);
      rho(i0, j0) = keep * rho(i0, j0) + half * t;
      rho(i1, j1) = keep * rho(i1, j1) + half * t;
      rho(i0, j1) *= keep;
      rho(i1, j0) *= keep;
    }
  }
}

void apply_gate(DensityMatrix& rho, const Gate& gate) {
  switch (gate.kind) {
    case Gate::Kind::Rotation:
      rotate_inplace(rho, gate.q0, gate.axis, gate.value);
      break;
    case Gate::Kind::Cnot:
      cnot_inplace(rho, gate.q0, gate.q1);
      break;
    case Gate::Kind::Depolarizing:
      depolarize_inplace(rho, gate.q0, gate.value);
      break;
  }
}

void apply_gate_adjoint(DensityMatrix& observable, const Gate& gate) {
  switch (gate.kind) {
    case Gate::Kind::Rotation:
      // U^dag O U with U = R(theta) equals R(-theta) O R(-theta)^dag.
      rotate_inplace(observable, gate.q0, gate.axis, -gate.value);
      break;
    case Gate::Kind::Cnot:
    case Gate::Kind::Depolarizing:
      // Both maps are self-adjoint under the Hilbert-Schmidt inner product.
      apply_gate(observable, gate);
      break;
  }
}

DensityMatrix class_projector(std::size_t cls) {
  DensityMatrix p = DensityMatrix::zero();
  p(2 * cls, 2 * cls) = 1.0;
  p(2 * cls + 1, 2 * cls + 1) = 1.0;
  return p;
}

// --- value-semantics operations ---------------------------------------------

DensityMatrix amplitude_embed(std::span<const double> input, bool zero_fallback) {
  if (input.size() != kDim) {
    throw EmbeddingError("amplitude embedding expects 16 features, got " +
                         std::to_string(input.size()));
  }
  double norm2 = 0.0;
  for (double v : input) {
    if (!std::isfinite(v)) throw EmbeddingError("non-finite embedding input");
    norm2 += v * v;
  }
  if (norm2 == 0.0) {
    if (!zero_fallback) throw EmbeddingError("cannot embed the all-zero vector");
    std::clog << "warning: all-zero embedding input replaced by |0000>\n";
    return DensityMatrix::basis_state(0);
  }
  const double inv = 1.0 / std::sqrt(norm2);
  std::array<Complex, kDim> psi{};
  for (std::size_t i = 0; i < kDim; ++i) psi[i] = input[i] * inv;
  return DensityMatrix::from_pure(psi);
}

DensityMatrix apply_rotation(DensityMatrix rho, std::size_t qubit, Axis axis, double angle) {
  rotate_inplace(rho, qubit, axis, angle);
  return rho;
}

DensityMatrix apply_cnot(DensityMatrix rho, std::size_t control, std::size_t target) {
  cnot_inplace(rho, control, target);
  return rho;
}

DensityMatrix apply_depolarizing(DensityMatrix rho, std::size_t qubit, double strength) {
  depolarize_inplace(rho, qubit, strength);
  return rho;
}

DensityMatrix run_circuit(const CircuitParams& params, std::span<const double> input,
                          const CircuitSpec& spec) {
  DensityMatrix rho = amplitude_embed(input);
  for (const Gate& gate : compile_circuit(params, spec)) apply_gate(rho, gate);
  return rho;
}

ClassProbabilities class_probabilities(const DensityMatrix& rho) {
  ClassProbabilities probs{};
  for (std::size_t c = 0; c < kClasses; ++c) {
    const double p = rho(2 * c, 2 * c).real() + rho(2 * c + 1, 2 * c + 1).real();
    probs[c] = std::max(p, 0.0);
  }
  return probs;
}

ClassCounts sample_counts(const ClassProbabilities& probs, std::uint64_t shots,
                          RandomStream& stream) {
  std::array<double, kClasses> cdf{};
  double total = 0.0;
  std::size_t last = 0;
  for (std::size_t c = 0; c < kClasses; ++c) {
    total += probs[c];
    cdf[c] = total;
    if (probs[c] > 0.0) last = c;
  }
  ClassCounts counts{};
  if (total <= 0.0) return counts;
  for (double& v : cdf) v /= total;
  for (std::uint64_t s = 0; s < shots; ++s) {
    const double u = stream.uniform();
    std::size_t c = 0;
    while (c < last && !(u < cdf[c])) ++c;
    ++counts[c];
  }
  return counts;
}

ClassCounts sample_class_counts(const DensityMatrix& rho, std::uint64_t shots,
                                RandomStream& stream) {
  return sample_counts(class_probabilities(rho), shots, stream);
}

}  // namespace qfl::qsim
