#include "qfl/fed.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <set>

#include "qfl/errors.hpp"
#include "qfl/parallel.hpp"

namespace qfl::fed {

namespace {

constexpr std::uint64_t kSamplingTag = 0x5a3e1;
constexpr std::uint64_t kLocalPurpose = 0;
constexpr std::uint64_t kControlPurpose = 1;

void require_shard(const ClientState& client) {
  if (client.shard.empty()) {
    throw ClientDataError("client " + std::to_string(client.id) + " has an empty shard");
  }
}

}  // namespace

std::string_view to_string(Algorithm algo) {
  switch (algo) {
    case Algorithm::FedAvg:
      return "fedavg";
    case Algorithm::Scaffold:
      return "scaffold";
    case Algorithm::QAnchor:
      return "qanchor";
  }
  return "unknown";
}

Algorithm parse_algorithm(std::string_view name) {
  if (name == "fedavg") return Algorithm::FedAvg;
  if (name == "scaffold") return Algorithm::Scaffold;
  if (name == "qanchor") return Algorithm::QAnchor;
  throw ConfigError("unknown algorithm '" + std::string(name) + "'");
}

void RoundConfig::validate() const {
  if (n_clients == 0) throw ConfigError("n_clients must be positive");
  if (sample_size == 0 || sample_size > n_clients) {
    throw ConfigError("sample_size must lie in [1, n_clients]");
  }
  if (local_epochs == 0) throw ConfigError("local_epochs must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (!(lr_local > 0.0) || !std::isfinite(lr_local)) throw ConfigError("lr_local must be > 0");
  if (!(lr_global > 0.0) || !std::isfinite(lr_global)) throw ConfigError("lr_global must be > 0");
  if (!(local_momentum >= 0.0 && local_momentum < 1.0)) {
    throw ConfigError("local_momentum must lie in [0, 1)");
  }
  // alpha = 0 is accepted so the FedAvg reduction can be exercised.
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
}

std::size_t local_steps(std::size_t shard_size, const RoundConfig& cfg) {
  return cfg.local_epochs * ((shard_size + cfg.batch_size - 1) / cfg.batch_size);
}

double effective_stepsize(const RoundConfig& cfg, std::span<const std::size_t> shard_sizes) {
  if (shard_sizes.empty()) return 0.0;
  double k = 0.0;
  for (std::size_t s : shard_sizes) k += static_cast<double>(local_steps(s, cfg));
  k /= static_cast<double>(shard_sizes.size());
  return cfg.lr_global * cfg.lr_local * k;
}

double momentum_step_sum(std::size_t k, double beta) {
  if (beta == 0.0) return static_cast<double>(k);
  const double kd = static_cast<double>(k);
  return (kd - beta * (1.0 - std::pow(beta, kd)) / (1.0 - beta)) / (1.0 - beta);
}

LocalResult local_sgd(std::span<const double> x, const ClientState& client,
                      std::span<const double> correction, const RoundConfig& cfg,
                      const GradientOracle& oracle, RandomStream& stream) {
  require_shard(client);
  const std::size_t d = x.size();
  LocalResult out;
  out.y.assign(x.begin(), x.end());
  Vector momentum(d, 0.0);
  Vector direction(d);
  std::vector<std::size_t> order = client.shard;
  for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), stream.engine());
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t len = std::min(cfg.batch_size, order.size() - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      const OracleGradient g = oracle.gradient(client.id, out.y, batch, stream);
      out.circuit_evals += g.circuit_evals;
      for (std::size_t j = 0; j < d; ++j) {
        direction[j] = g.values[j] + correction[j];
        momentum[j] = cfg.local_momentum * momentum[j] + direction[j];
        out.y[j] -= cfg.lr_local * momentum[j];
      }
    }
  }
  return out;
}

LocalResult local_update_fedavg(std::span<const double> x, const ClientState& client,
                                const RoundConfig& cfg, const GradientOracle& oracle,
                                RandomStream& stream) {
  const Vector zero(x.size(), 0.0);
  return local_sgd(x, client, zero, cfg, oracle, stream);
}

ScaffoldResult local_update_scaffold(std::span<const double> x, const ClientState& client,
                                     std::span<const double> global_control,
                                     const RoundConfig& cfg, const GradientOracle& oracle,
                                     RandomStream& stream) {
  const std::size_t d = x.size();
  Vector correction(d);
  for (std::size_t j = 0; j < d; ++j) correction[j] = global_control[j] - client.control[j];
  ScaffoldResult out;
  out.local = local_sgd(x, client, correction, cfg, oracle, stream);
  const double scale =
      1.0 / (momentum_step_sum(local_steps(client.shard.size(), cfg), cfg.local_momentum) *
             cfg.lr_local);
  out.control.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    out.control[j] = client.control[j] - global_control[j] + (x[j] - out.local.y[j]) * scale;
  }
  return out;
}

LocalResult local_update_qanchor(std::span<const double> x, const ClientState& client,
                                 std::span<const double> server_control, const RoundConfig& cfg,
                                 const GradientOracle& oracle, RandomStream& stream) {
  const std::size_t d = x.size();
  Vector correction(d);
  for (std::size_t j = 0; j < d; ++j) correction[j] = server_control[j] - client.control[j];
  return local_sgd(x, client, correction, cfg, oracle, stream);
}

ControlUpdate qanchor_control_updates(const ClientState& client, std::span<const double> anchor,
                                      const RoundConfig& cfg, const GradientOracle& oracle,
                                      RandomStream& stream) {
  require_shard(client);
  std::vector<std::size_t> order = client.shard;
  std::shuffle(order.begin(), order.end(), stream.engine());
  order.resize(std::min(cfg.batch_size, order.size()));

  const OracleGradient raw = oracle.gradient(client.id, anchor, order, stream);
  const OracleGradient zne = oracle.zne_gradient(client.id, anchor, order, stream);

  const std::size_t d = anchor.size();
  const double a = cfg.alpha;
  ControlUpdate out;
  out.control.resize(d);
  out.zne_control.resize(d);
  out.zne_delta.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    out.control[j] = (1.0 - a) * client.control[j] + a * raw.values[j];
    out.zne_control[j] = (1.0 - a) * client.zne_control[j] + a * zne.values[j];
    out.zne_delta[j] = out.zne_control[j] - client.zne_control[j];
  }
  out.circuit_evals = raw.circuit_evals + zne.circuit_evals;
  return out;
}

ServerState server_aggregate(ServerState server, std::vector<ClientDelta> deltas,
                             const RoundConfig& cfg) {
  if (deltas.size() != cfg.sample_size) {
    throw AggregationError("expected " + std::to_string(cfg.sample_size) + " client deltas, got " +
                           std::to_string(deltas.size()));
  }
  std::sort(deltas.begin(), deltas.end(),
            [](const ClientDelta& a, const ClientDelta& b) { return a.id < b.id; });
  for (std::size_t k = 1; k < deltas.size(); ++k) {
    if (deltas[k].id == deltas[k - 1].id) {
      throw AggregationError("duplicate client id " + std::to_string(deltas[k].id));
    }
  }
  const std::size_t d = server.x.size();
  Vector sum(d, 0.0);
  Vector control_sum(d, 0.0);
  bool has_control = false;
  for (const ClientDelta& delta : deltas) {
    if (delta.model_delta.size() != d) throw AggregationError("model delta has wrong dimension");
    for (std::size_t j = 0; j < d; ++j) sum[j] += delta.model_delta[j];
    if (!delta.control_delta.empty()) {
      if (delta.control_delta.size() != d) {
        throw AggregationError("control delta has wrong dimension");
      }
      has_control = true;
      for (std::size_t j = 0; j < d; ++j) control_sum[j] += delta.control_delta[j];
    }
  }
  const double inv_s = 1.0 / static_cast<double>(deltas.size());
  for (std::size_t j = 0; j < d; ++j) server.x[j] += cfg.lr_global * (sum[j] * inv_s);
  if (has_control) {
    server.control.resize(d, 0.0);
    const double inv_n = 1.0 / static_cast<double>(cfg.n_clients);
    for (std::size_t j = 0; j < d; ++j) server.control[j] += control_sum[j] * inv_n;
  }
  ++server.round;
  return server;
}

std::vector<std::size_t> sample_clients(std::size_t n, std::size_t count, RandomStream& stream) {
  std::vector<std::size_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i;
  count = std::min(count, n);
  for (std::size_t k = 0; k < count; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, n - 1);
    std::swap(ids[k], ids[pick(stream.engine())]);
  }
  ids.resize(count);
  std::sort(ids.begin(), ids.end());
  return ids;
}

TrainingState run_training(const RoundConfig& cfg, std::vector<std::vector<std::size_t>> shards,
                           Vector init, const GradientOracle& oracle,
                           const TrainingOptions& options, const RoundObserver& observer) {
  cfg.validate();
  if (shards.size() != cfg.n_clients) {
    throw ConfigError("partition has " + std::to_string(shards.size()) + " shards but n_clients = " +
                      std::to_string(cfg.n_clients));
  }
  if (init.size() != oracle.dimension()) {
    throw ConfigError("initial model dimension does not match the oracle");
  }
  const std::size_t d = init.size();

  TrainingState state;
  state.server.x = std::move(init);
  state.server.control.assign(d, 0.0);
  state.clients.resize(cfg.n_clients);
  for (std::size_t i = 0; i < cfg.n_clients; ++i) {
    ClientState& c = state.clients[i];
    c.id = i;
    c.control.assign(d, 0.0);
    c.zne_control.assign(d, 0.0);
    c.shard = std::move(shards[i]);
    require_shard(c);
  }

  struct Slot {
    ClientDelta delta;
    Vector new_control;
    Vector new_zne_control;
    std::uint64_t evals = 0;
  };

  for (std::size_t r = 1; r <= options.rounds; ++r) {
    RandomStream sampler = RandomStream::derive(options.seed, {r, kSamplingTag});
    state.sampled = sample_clients(cfg.n_clients, cfg.sample_size, sampler);
    const std::span<const double> x = state.server.x;
    const std::span<const double> server_control = state.server.control;

    std::vector<Slot> slots(state.sampled.size());
    parallel_for(state.sampled.size(), options.workers, [&](std::size_t k) {
      const ClientState& client = state.clients[state.sampled[k]];
      RandomStream local = RandomStream::derive(options.seed, {r, client.id, kLocalPurpose});
      Slot& slot = slots[k];
      slot.delta.id = client.id;
      LocalResult result;
      switch (cfg.algorithm) {
        case Algorithm::FedAvg:
          result = local_update_fedavg(x, client, cfg, oracle, local);
          break;
        case Algorithm::Scaffold: {
          ScaffoldResult s = local_update_scaffold(x, client, server_control, cfg, oracle, local);
          result = std::move(s.local);
          slot.delta.control_delta.resize(d);
          for (std::size_t j = 0; j < d; ++j) {
            slot.delta.control_delta[j] = s.control[j] - client.control[j];
          }
          slot.new_control = std::move(s.control);
          break;
        }
        case Algorithm::QAnchor: {
          result = local_update_qanchor(x, client, server_control, cfg, oracle, local);
          RandomStream ctl = RandomStream::derive(options.seed, {r, client.id, kControlPurpose});
          ControlUpdate u = qanchor_control_updates(client, x, cfg, oracle, ctl);
          slot.new_control = std::move(u.control);
          slot.new_zne_control = std::move(u.zne_control);
          slot.delta.control_delta = std::move(u.zne_delta);
          slot.evals += u.circuit_evals;
          break;
        }
      }
      slot.evals += result.circuit_evals;
      slot.delta.model_delta.resize(d);
      for (std::size_t j = 0; j < d; ++j) slot.delta.model_delta[j] = result.y[j] - x[j];
    });

    std::vector<ClientDelta> deltas;
    deltas.reserve(slots.size());
    for (Slot& slot : slots) {
      ClientState& client = state.clients[slot.delta.id];
      if (!slot.new_control.empty()) client.control = std::move(slot.new_control);
      if (!slot.new_zne_control.empty()) client.zne_control = std::move(slot.new_zne_control);
      state.circuit_evals += slot.evals;
      deltas.push_back(std::move(slot.delta));
    }
    state.server = server_aggregate(std::move(state.server), std::move(deltas), cfg);
    if (observer) observer(state);
  }
  return state;
}

void write_metrics_csv(std::ostream& out, const MetricsSeries& series, bool header) {
  if (header) out << "round,algo,train_loss,train_acc,test_loss,test_acc,grad_evals,wall_ms\n";
  const auto flags = out.flags();
  const auto precision = out.precision();
  out << std::setprecision(10);
  for (const RoundMetrics& m : series) {
    out << m.round << ',' << to_string(m.algorithm) << ',' << m.train_loss << ',' << m.train_acc
        << ',' << m.test_loss << ',' << m.test_acc << ',' << m.grad_evals << ','
        << std::fixed << std::setprecision(3) << m.wall_ms << '\n';
    out.flags(flags);
    out << std::setprecision(10);
  }
  out.precision(precision);
}

}  // namespace qfl::fed
