#pragma once

// Federated optimization engine: FedAvg, SCAFFOLD (option II controls) and
// Q-ANCHOR, driven by any gradient oracle.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qfl/random.hpp"

namespace qfl::fed {

using Vector = std::vector<double>;

enum class Algorithm { FedAvg, Scaffold, QAnchor };

std::string_view to_string(Algorithm algo);
Algorithm parse_algorithm(std::string_view name);

struct RoundConfig {
  std::size_t n_clients = 8;
  std::size_t sample_size = 8;
  std::size_t local_epochs = 5;
  std::size_t batch_size = 16;
  double lr_local = 0.1;
  double lr_global = 1.0;
  double local_momentum = 0.9;
  double alpha = 0.1;  // anchor momentum of the Q-ANCHOR control EMA
  Algorithm algorithm = Algorithm::QAnchor;

  void validate() const;
};

// K = local_epochs * ceil(shard_size / batch_size)
std::size_t local_steps(std::size_t shard_size, const RoundConfig& cfg);

// eta_g * eta_l * mean(K) over the given shard sizes.
double effective_stepsize(const RoundConfig& cfg, std::span<const std::size_t> shard_sizes);

// Displacement of K heavy-ball steps per unit step size and unit constant
// direction: sum_{t=1..K} (1 - beta^t) / (1 - beta). Equals K when beta = 0.
double momentum_step_sum(std::size_t k, double beta);

struct OracleGradient {
  Vector values;
  std::uint64_t circuit_evals = 0;
};

// Client-local stochastic gradient oracle. `batch` holds sample ids drawn from
// the client's shard.
class GradientOracle {
 public:
  virtual ~GradientOracle() = default;
  virtual std::size_t dimension() const = 0;
  // Raw noisy oracle g~_i.
  virtual OracleGradient gradient(std::size_t client, std::span<const double> x,
                                  std::span<const std::size_t> batch,
                                  RandomStream& stream) const = 0;
  // ZNE-corrected oracle g~_i^ZNE.
  virtual OracleGradient zne_gradient(std::size_t client, std::span<const double> x,
                                      std::span<const std::size_t> batch,
                                      RandomStream& stream) const = 0;
};

struct ClientState {
  std::size_t id = 0;
  Vector control;      // c_i
  Vector zne_control;  // c_{i,ZNE}
  std::vector<std::size_t> shard;
};

struct ServerState {
  Vector x;
  std::size_t round = 0;
  // SCAFFOLD global control c, or the Q-ANCHOR server reference c_srv.
  Vector control;
};

struct LocalResult {
  Vector y;
  std::uint64_t circuit_evals = 0;
};

// K corrected SGD steps from x along g~ + correction, with a momentum buffer
// that starts at zero. Shared by all three algorithms.
LocalResult local_sgd(std::span<const double> x, const ClientState& client,
                      std::span<const double> correction, const RoundConfig& cfg,
                      const GradientOracle& oracle, RandomStream& stream);

LocalResult local_update_fedavg(std::span<const double> x, const ClientState& client,
                                const RoundConfig& cfg, const GradientOracle& oracle,
                                RandomStream& stream);

struct ScaffoldResult {
  LocalResult local;
  Vector control;  // c_i+
};

// Option II control refresh c_i+ = c_i - c + (x - y_K) / (eta_l * S), where S
// is momentum_step_sum(K, momentum); S = K without momentum.
ScaffoldResult local_update_scaffold(std::span<const double> x, const ClientState& client,
                                     std::span<const double> global_control,
                                     const RoundConfig& cfg, const GradientOracle& oracle,
                                     RandomStream& stream);

LocalResult local_update_qanchor(std::span<const double> x, const ClientState& client,
                                 std::span<const double> server_control, const RoundConfig& cfg,
                                 const GradientOracle& oracle, RandomStream& stream);

struct ControlUpdate {
  Vector control;
  Vector zne_control;
  Vector zne_delta;  // c_{i,ZNE}^r - c_{i,ZNE}^{r-1}
  std::uint64_t circuit_evals = 0;
};

// EMA refresh of both client controls at the anchor point. One mini-batch is
// shared by the raw and ZNE evaluations.
ControlUpdate qanchor_control_updates(const ClientState& client, std::span<const double> anchor,
                                      const RoundConfig& cfg, const GradientOracle& oracle,
                                      RandomStream& stream);

struct ClientDelta {
  std::size_t id = 0;
  Vector model_delta;    // y_K - x
  Vector control_delta;  // Delta c_i (SCAFFOLD) or Delta c_{i,ZNE} (Q-ANCHOR); may be empty
};

// x += eta_g * mean(model deltas); control += (1/N) * sum(control deltas).
// Deltas are merged in ascending id order.
ServerState server_aggregate(ServerState server, std::vector<ClientDelta> deltas,
                             const RoundConfig& cfg);

struct TrainingState {
  ServerState server;
  std::vector<ClientState> clients;
  std::vector<std::size_t> sampled;  // ids sampled in the latest round
  std::uint64_t circuit_evals = 0;   // cumulative
};

using RoundObserver = std::function<void(const TrainingState&)>;

struct TrainingOptions {
  std::size_t rounds = 20;
  std::uint64_t seed = 0;
  std::size_t workers = 1;
};

// Runs R rounds from `init`. The observer fires after every round (not for
// the initial state). Deterministic given the seed regardless of `workers`.
TrainingState run_training(const RoundConfig& cfg, std::vector<std::vector<std::size_t>> shards,
                           Vector init, const GradientOracle& oracle,
                           const TrainingOptions& options, const RoundObserver& observer = {});

// Uniform sample of `count` ids out of [0, n) without replacement, ascending.
std::vector<std::size_t> sample_clients(std::size_t n, std::size_t count, RandomStream& stream);

struct RoundMetrics {
  std::size_t round = 0;
  Algorithm algorithm = Algorithm::FedAvg;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double test_loss = 0.0;
  double test_acc = 0.0;
  std::uint64_t grad_evals = 0;
  double wall_ms = 0.0;
};

using MetricsSeries = std::vector<RoundMetrics>;

// Header plus one row per entry.
void write_metrics_csv(std::ostream& out, const MetricsSeries& series, bool header = true);

}  // namespace qfl::fed
