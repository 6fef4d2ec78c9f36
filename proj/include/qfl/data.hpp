#pragma once

// Binary Blobs generation, Dirichlet non-IID partitioning and evaluation.

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <utility>
#include <vector>

#include "qfl/oracle.hpp"
#include "qfl/qsim.hpp"

namespace qfl::data {

inline constexpr std::size_t kBits = 16;
inline constexpr std::size_t kNumPatterns = 8;

struct BlobSample {
  std::array<std::uint8_t, kBits> bits{};
  std::size_t label = 0;

  qsim::Input to_input() const;
  oracle::LabeledInput to_labeled() const { return {to_input(), label}; }
  friend bool operator==(const BlobSample&, const BlobSample&) = default;
};

// Reference 4x4 images, bit index = row * 4 + col. Labels 0-3 are the
// horizontal bars on rows 0-3, labels 4-7 the vertical bars on columns 0-3.
const std::array<std::array<std::uint8_t, kBits>, kNumPatterns>& reference_patterns();

std::vector<BlobSample> generate_blobs(std::size_t n, double flip_p, std::uint64_t seed);

struct Partition {
  std::vector<std::vector<std::size_t>> shards;
  double concentration = 0.0;
};

// Per class, Dirichlet(alpha * 1_N) proportions over clients. The whole draw
// is repeated (at most 100 times) while any client ends up empty.
Partition dirichlet_partition(std::span<const std::size_t> labels, std::size_t n_clients,
                              double alpha, std::uint64_t seed);

struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
};

// Mean NLL and argmax accuracy (ties -> lowest class) of the circuit at the
// given noise level; the default is the noiseless model.
Evaluation evaluate(const qsim::CircuitParams& params, std::span<const BlobSample> samples,
                    double noise = 0.0);

std::vector<std::size_t> labels_of(std::span<const BlobSample> samples);
std::vector<oracle::LabeledInput> to_labeled(std::span<const BlobSample> samples);

// CSV with columns b0..b15,label.
void write_csv(std::ostream& out, std::span<const BlobSample> samples);
std::vector<BlobSample> read_csv(std::istream& in);

// JSON object {"<client id>": [indices...], ...}.
void write_partition_json(std::ostream& out, const Partition& partition);
Partition read_partition_json(std::istream& in);

}  // namespace qfl::data
