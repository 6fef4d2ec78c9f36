#include "qfl/data.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include "json.hpp"
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "qfl/errors.hpp"
#include "qfl/random.hpp"

namespace qfl::data {

namespace {

constexpr std::size_t kSide = 4;
constexpr std::size_t kMaxPartitionRetries = 100;

std::array<std::array<std::uint8_t, kBits>, kNumPatterns> make_patterns() {
  std::array<std::array<std::uint8_t, kBits>, kNumPatterns> patterns{};
  for (std::size_t k = 0; k < kSide; ++k) {
    for (std::size_t t = 0; t < kSide; ++t) {
      patterns[k][k * kSide + t] = 1;         // row bar
      patterns[kSide + k][t * kSide + k] = 1;  // column bar
    }
  }
  return patterns;
}

}  // namespace

const std::array<std::array<std::uint8_t, kBits>, kNumPatterns>& reference_patterns() {
  static const auto patterns = make_patterns();
  return patterns;
}

qsim::Input BlobSample::to_input() const {
  qsim::Input in{};
  for (std::size_t i = 0; i < kBits; ++i) in[i] = bits[i];
  return in;
}

std::vector<BlobSample> generate_blobs(std::size_t n, double flip_p, std::uint64_t seed) {
  if (!(flip_p >= 0.0 && flip_p < 0.5)) throw ConfigError("flip_p must lie in [0, 0.5)");
  RandomStream stream(seed);
  std::uniform_int_distribution<std::size_t> pick(0, kNumPatterns - 1);
  std::vector<BlobSample> samples(n);
  for (BlobSample& s : samples) {
    s.label = pick(stream.engine());
    s.bits = reference_patterns()[s.label];
    for (auto& b : s.bits) {
      if (stream.uniform() < flip_p) b ^= 1;
    }
  }
  return samples;
}

Partition dirichlet_partition(std::span<const std::size_t> labels, std::size_t n_clients,
                              double alpha, std::uint64_t seed) {
  if (n_clients == 0) throw ConfigError("n_clients must be positive");
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("dirichlet alpha must be > 0");

  std::size_t n_classes = 0;
  for (std::size_t l : labels) n_classes = std::max(n_classes, l + 1);
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);

  RandomStream stream(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  for (std::size_t attempt = 0; attempt < kMaxPartitionRetries; ++attempt) {
    Partition part;
    part.concentration = alpha;
    part.shards.assign(n_clients, {});
    for (const auto& members : by_class) {
      if (members.empty()) continue;
      std::vector<double> w(n_clients);
      double total = 0.0;
      for (double& v : w) total += (v = gamma(stream.engine()));
      if (total <= 0.0) {
        // Every gamma draw underflowed; put the mass on one random client.
        std::fill(w.begin(), w.end(), 0.0);
        w[std::uniform_int_distribution<std::size_t>(0, n_clients - 1)(stream.engine())] = 1.0;
        total = 1.0;
      }
      std::vector<std::size_t> order = members;
      std::shuffle(order.begin(), order.end(), stream.engine());
      double cum = 0.0;
      std::size_t begin = 0;
      for (std::size_t c = 0; c < n_clients; ++c) {
        cum += w[c] / total;
        std::size_t end = c + 1 == n_clients
                              ? order.size()
                              : std::min(order.size(), static_cast<std::size_t>(
                                                           cum * static_cast<double>(order.size())));
        end = std::max(end, begin);
        part.shards[c].insert(part.shards[c].end(), order.begin() + begin, order.begin() + end);
        begin = end;
      }
    }
    const bool all_nonempty = std::none_of(part.shards.begin(), part.shards.end(),
                                           [](const auto& s) { return s.empty(); });
    if (all_nonempty) {
      for (auto& s : part.shards) std::sort(s.begin(), s.end());
      return part;
    }
  }
  throw PartitionError("could not produce a partition without empty clients after " +
                       std::to_string(kMaxPartitionRetries) + " draws");
}

Evaluation evaluate(const qsim::CircuitParams& params, std::span<const BlobSample> samples,
                    double noise) {
  if (samples.empty()) throw ConfigError("cannot evaluate on an empty sample set");
  const qsim::CircuitSpec spec = qsim::CircuitSpec::with_noise(noise);
  double loss = 0.0;
  std::size_t correct = 0;
  for (const BlobSample& s : samples) {
    const auto probs = qsim::class_probabilities(qsim::run_circuit(params, s.to_input(), spec));
    loss += -std::log(std::max(probs[s.label], oracle::kProbabilityFloor));
    const auto best = static_cast<std::size_t>(
        std::distance(probs.begin(), std::max_element(probs.begin(), probs.end())));
    if (best == s.label) ++correct;
  }
  const double n = static_cast<double>(samples.size());
  return {loss / n, static_cast<double>(correct) / n};
}

std::vector<std::size_t> labels_of(std::span<const BlobSample> samples) {
  std::vector<std::size_t> labels;
  labels.reserve(samples.size());
  for (const BlobSample& s : samples) labels.push_back(s.label);
  return labels;
}

std::vector<oracle::LabeledInput> to_labeled(std::span<const BlobSample> samples) {
  std::vector<oracle::LabeledInput> out;
  out.reserve(samples.size());
  for (const BlobSample& s : samples) out.push_back(s.to_labeled());
  return out;
}

void write_csv(std::ostream& out, std::span<const BlobSample> samples) {
  for (std::size_t i = 0; i < kBits; ++i) out << 'b' << i << ',';
  out << "label\n";
  for (const BlobSample& s : samples) {
    for (auto b : s.bits) out << static_cast<int>(b) << ',';
    out << s.label << '\n';
  }
}

std::vector<BlobSample> read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw ConfigError("dataset CSV is empty");
  std::vector<BlobSample> samples;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    std::vector<long> values;
    while (std::getline(row, cell, ',')) {
      try {
        values.push_back(std::stol(cell));
      } catch (const std::exception&) {
        throw ConfigError("dataset CSV line " + std::to_string(line_no) + ": bad cell '" + cell +
                          "'");
      }
    }
    if (values.size() != kBits + 1) {
      throw ConfigError("dataset CSV line " + std::to_string(line_no) + ": expected 17 columns");
    }
    BlobSample s;
    for (std::size_t i = 0; i < kBits; ++i) {
      if (values[i] != 0 && values[i] != 1) {
        throw ConfigError("dataset CSV line " + std::to_string(line_no) + ": bits must be 0/1");
      }
      s.bits[i] = static_cast<std::uint8_t>(values[i]);
    }
    if (values[kBits] < 0 || values[kBits] >= static_cast<long>(kNumPatterns)) {
      throw ConfigError("dataset CSV line " + std::to_string(line_no) + ": label out of range");
    }
    s.label = static_cast<std::size_t>(values[kBits]);
    samples.push_back(s);
  }
  return samples;
}

void write_partition_json(std::ostream& out, const Partition& partition) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (std::size_t c = 0; c < partition.shards.size(); ++c) {
    j[std::to_string(c)] = partition.shards[c];
  }
  out << j.dump(2) << '\n';
}

Partition read_partition_json(std::istream& in) {
  const nlohmann::json j = nlohmann::json::parse(in);
  Partition part;
  part.shards.resize(j.size());
  for (const auto& [key, value] : j.items()) {
    const std::size_t id = std::stoul(key);
    if (id >= part.shards.size()) throw ConfigError("partition client ids must be 0..N-1");
    part.shards[id] = value.get<std::vector<std::size_t>>();
  }
  return part;
}

}  // namespace qfl::data
