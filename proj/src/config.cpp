#include "qfl/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "qfl/errors.hpp"

namespace qfl::config {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) out.push_back(trim(item));
  if (out.size() == 1 && out[0].empty()) out.clear();
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
  throw ConfigError(key + ": cannot parse '" + value + "' as " + what);
}

// --- scalar codecs ------------------------------------------------------------

template <class T>
struct Codec;

template <>
struct Codec<double> {
  static double decode(const std::string& key, const std::string& v) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || !std::isfinite(out)) {
      bad_value(key, v, "a finite number");
    }
    return out;
  }
  static std::string encode(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
  }
};

template <class U>
struct UnsignedCodec {
  static U decode(const std::string& key, const std::string& v) {
    U out = 0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
      bad_value(key, v, "a non-negative integer");
    }
    return out;
  }
  static std::string encode(U v) { return std::to_string(v); }
};

template <>
struct Codec<unsigned long> : UnsignedCodec<unsigned long> {};
template <>
struct Codec<unsigned long long> : UnsignedCodec<unsigned long long> {};

// ZneConfig::degree
template <>
struct Codec<int> {
  static int decode(const std::string& key, const std::string& v) {
    const auto u = UnsignedCodec<unsigned long>::decode(key, v);
    if (u > 16) throw ConfigError(key + ": must be at most 16");
    return static_cast<int>(u);
  }
  static std::string encode(int v) { return std::to_string(v); }
};

template <>
struct Codec<bool> {
  static bool decode(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    bad_value(key, v, "a boolean");
  }
  static std::string encode(bool v) { return v ? "true" : "false"; }
};

template <>
struct Codec<std::string> {
  static std::string decode(const std::string&, const std::string& v) { return v; }
  static std::string encode(const std::string& v) { return v; }
};

template <>
struct Codec<std::filesystem::path> {
  static std::filesystem::path decode(const std::string& key, const std::string& v) {
    if (v.empty()) throw ConfigError(key + ": path must not be empty");
    return v;
  }
  static std::string encode(const std::filesystem::path& v) { return v.string(); }
};

template <>
struct Codec<fed::Algorithm> {
  static fed::Algorithm decode(const std::string& key, const std::string& v) {
    try {
      return fed::parse_algorithm(v);
    } catch (const ConfigError&) {
      bad_value(key, v, "an algorithm (fedavg, scaffold, qanchor)");
    }
  }
  static std::string encode(fed::Algorithm v) { return std::string(fed::to_string(v)); }
};

template <>
struct Codec<synth::BiasMode> {
  static synth::BiasMode decode(const std::string& key, const std::string& v) {
    if (v == "constant") return synth::BiasMode::Constant;
    if (v == "saturating") return synth::BiasMode::Saturating;
    bad_value(key, v, "a bias mode (constant, saturating)");
  }
  static std::string encode(synth::BiasMode v) {
    return v == synth::BiasMode::Constant ? "constant" : "saturating";
  }
};

template <>
struct Codec<ExperimentKind> {
  static ExperimentKind decode(const std::string& key, const std::string& v) {
    try {
      return parse_kind(v);
    } catch (const ConfigError&) {
      bad_value(key, v, "an experiment kind");
    }
  }
  static std::string encode(ExperimentKind v) { return to_string(v); }
};

template <class T>
struct Codec<std::vector<T>> {
  static std::vector<T> decode(const std::string& key, const std::string& v) {
    std::vector<T> out;
    for (const std::string& item : split_list(v)) out.push_back(Codec<T>::decode(key, item));
    return out;
  }
  static std::string encode(const std::vector<T>& v) {
    std::string out;
    for (std::size_t k = 0; k < v.size(); ++k) {
      if (k) out += ", ";
      out += Codec<T>::encode(v[k]);
    }
    return out;
  }
};

// --- key table ----------------------------------------------------------------

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <class Access>
Field field(std::string section, std::string key, Access access) {
  const std::string full = section + "." + key;
  Field f;
  f.section = std::move(section);
  f.key = std::move(key);
  f.set = [access, full](ExperimentConfig& c, const std::string& v) {
    auto& slot = access(c);
    slot = Codec<std::decay_t<decltype(slot)>>::decode(full, v);
  };
  f.get = [access](const ExperimentConfig& c) {
    auto& slot = access(const_cast<ExperimentConfig&>(c));
    return Codec<std::decay_t<decltype(slot)>>::encode(slot);
  };
  return f;
}

#define QFL_FIELD(section, key, expr) \
  field(section, key, [](ExperimentConfig& c) -> auto& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      QFL_FIELD("experiment", "kind", c.kind),
      QFL_FIELD("experiment", "seed", c.seed),
      QFL_FIELD("experiment", "out", c.out_dir),
      QFL_FIELD("experiment", "workers", c.workers),

      QFL_FIELD("data", "n_train", c.data.n_train),
      QFL_FIELD("data", "n_test", c.data.n_test),
      QFL_FIELD("data", "flip_p", c.data.flip_p),
      QFL_FIELD("data", "dirichlet_alpha", c.data.dirichlet_alpha),

      QFL_FIELD("fed", "n_clients", c.fed.round.n_clients),
      QFL_FIELD("fed", "sample_size", c.fed.round.sample_size),
      QFL_FIELD("fed", "local_epochs", c.fed.round.local_epochs),
      QFL_FIELD("fed", "batch_size", c.fed.round.batch_size),
      QFL_FIELD("fed", "lr_local", c.fed.round.lr_local),
      QFL_FIELD("fed", "lr_global", c.fed.round.lr_global),
      QFL_FIELD("fed", "local_momentum", c.fed.round.local_momentum),
      QFL_FIELD("fed", "alpha", c.fed.round.alpha),
      QFL_FIELD("fed", "rounds", c.fed.rounds),
      QFL_FIELD("fed", "seeds", c.fed.seeds),
      QFL_FIELD("fed", "algorithms", c.fed.algorithms),

      QFL_FIELD("noise", "p", c.noise.p),
      QFL_FIELD("noise", "shots", c.noise.shots),

      QFL_FIELD("zne", "scale_factors", c.zne.scale_factors),
      QFL_FIELD("zne", "degree", c.zne.degree),
      QFL_FIELD("zne", "clip", c.zne.clip),

      QFL_FIELD("bias_sweep", "noise_levels", c.bias_sweep.noise_levels),
      QFL_FIELD("bias_sweep", "instances", c.bias_sweep.instances),

      QFL_FIELD("shot_sweep", "shots", c.shot_sweep.shots),
      QFL_FIELD("shot_sweep", "trials", c.shot_sweep.trials),
      QFL_FIELD("shot_sweep", "p", c.shot_sweep.p),

      QFL_FIELD("synth", "dimension", c.synth.dimension),
      QFL_FIELD("synth", "n_clients", c.synth.n_clients),
      QFL_FIELD("synth", "curvature_min", c.synth.curvature_min),
      QFL_FIELD("synth", "curvature_max", c.synth.curvature_max),
      QFL_FIELD("synth", "curvature_heterogeneity", c.synth.curvature_heterogeneity),
      QFL_FIELD("synth", "target_spread", c.synth.target_spread),
      QFL_FIELD("synth", "algorithms", c.synth.algorithms),
      QFL_FIELD("synth", "bias_norms", c.synth.bias_norms),
      QFL_FIELD("synth", "kappa_b", c.synth.kappa_b),
      QFL_FIELD("synth", "kappa_v", c.synth.kappa_v),
      QFL_FIELD("synth", "sigma", c.synth.sigma),
      QFL_FIELD("synth", "sigma_q", c.synth.sigma_q),
      QFL_FIELD("synth", "bias_mode", c.synth.bias_mode),
      QFL_FIELD("synth", "bias_lipschitz", c.synth.bias_lipschitz),
      QFL_FIELD("synth", "bias_common_fraction", c.synth.bias_common_fraction),
      QFL_FIELD("synth", "rounds", c.synth.rounds),
      QFL_FIELD("synth", "sample_size", c.synth.sample_size),
      QFL_FIELD("synth", "local_epochs", c.synth.local_epochs),
      QFL_FIELD("synth", "lr_local", c.synth.lr_local),
      QFL_FIELD("synth", "lr_global", c.synth.lr_global),
      QFL_FIELD("synth", "local_momentum", c.synth.local_momentum),
      QFL_FIELD("synth", "alpha", c.synth.alpha),

      QFL_FIELD("output", "record_wall_time", c.output.record_wall_time),
  };
  return table;
}

#undef QFL_FIELD

}  // namespace

namespace {

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

void require_unit_interval(double v, const std::string& key) {
  require(v >= 0.0 && v <= 1.0, key, "must lie in [0, 1]");
}

}  // namespace

std::string to_string(ExperimentKind kind) {
  switch (kind) {
    case ExperimentKind::GenData:
      return "gen-data";
    case ExperimentKind::BiasSweep:
      return "bias-sweep";
    case ExperimentKind::FlCompare:
      return "fl-compare";
    case ExperimentKind::SynthFloor:
      return "synth-floor";
    case ExperimentKind::ShotSweep:
      return "shot-sweep";
  }
  return "unknown";
}

ExperimentKind parse_kind(const std::string& name) {
  for (auto k : {ExperimentKind::GenData, ExperimentKind::BiasSweep, ExperimentKind::FlCompare,
                 ExperimentKind::SynthFloor, ExperimentKind::ShotSweep}) {
    if (to_string(k) == name) return k;
  }
  throw ConfigError("unknown experiment kind '" + name + "'");
}

oracle::GradientMode NoiseSection::mode() const {
  return shots == 0 ? oracle::GradientMode::analytic() : oracle::GradientMode::with_shots(shots);
}

void ExperimentConfig::validate() const {
  require(workers >= 1, "experiment.workers", "must be at least 1");

  require(data.n_train >= 1, "data.n_train", "must be positive");
  require(data.n_test >= 1, "data.n_test", "must be positive");
  require(data.flip_p >= 0.0 && data.flip_p < 0.5, "data.flip_p", "must lie in [0, 0.5)");
  require(data.dirichlet_alpha > 0.0, "data.dirichlet_alpha", "must be > 0");

  const fed::RoundConfig& r = fed.round;
  require(r.n_clients >= 1, "fed.n_clients", "must be positive");
  require(r.sample_size >= 1 && r.sample_size <= r.n_clients, "fed.sample_size",
          "must lie in [1, fed.n_clients]");
  require(r.local_epochs >= 1, "fed.local_epochs", "must be positive");
  require(r.batch_size >= 1, "fed.batch_size", "must be positive");
  require(r.lr_local > 0.0, "fed.lr_local", "must be > 0");
  require(r.lr_global > 0.0, "fed.lr_global", "must be > 0");
  require(r.local_momentum >= 0.0 && r.local_momentum < 1.0, "fed.local_momentum",
          "must lie in [0, 1)");
  require_unit_interval(r.alpha, "fed.alpha");
  require(fed.seeds >= 1, "fed.seeds", "must be positive");
  require(!fed.algorithms.empty(), "fed.algorithms", "must list at least one algorithm");
  require(data.n_train >= r.n_clients, "fed.n_clients", "exceeds data.n_train");

  require_unit_interval(noise.p, "noise.p");

  try {
    zne.validate();
  } catch (const ZneConfigError& e) {
    throw ConfigError(std::string("zne.scale_factors: ") + e.what());
  }

  require(!bias_sweep.noise_levels.empty(), "bias_sweep.noise_levels", "must not be empty");
  for (double p : bias_sweep.noise_levels) require_unit_interval(p, "bias_sweep.noise_levels");
  require(bias_sweep.instances >= 1, "bias_sweep.instances", "must be positive");

  require(!shot_sweep.shots.empty(), "shot_sweep.shots", "must not be empty");
  for (auto s : shot_sweep.shots) require(s >= 1, "shot_sweep.shots", "entries must be positive");
  require(shot_sweep.trials >= 2, "shot_sweep.trials", "must be at least 2");
  require_unit_interval(shot_sweep.p, "shot_sweep.p");

  const SynthSection& s = synth;
  require(s.dimension >= 1, "synth.dimension", "must be positive");
  require(s.n_clients >= 1, "synth.n_clients", "must be positive");
  require(s.curvature_min > 0.0, "synth.curvature_min", "must be > 0");
  require(s.curvature_max >= s.curvature_min, "synth.curvature_max", "must be >= curvature_min");
  require_unit_interval(s.curvature_heterogeneity, "synth.curvature_heterogeneity");
  require(s.target_spread >= 0.0, "synth.target_spread", "must be >= 0");
  require(!s.algorithms.empty(), "synth.algorithms", "must list at least one algorithm");
  require(!s.bias_norms.empty(), "synth.bias_norms", "must not be empty");
  for (double u : s.bias_norms) require(u >= 0.0, "synth.bias_norms", "entries must be >= 0");
  require(!s.kappa_b.empty(), "synth.kappa_b", "must not be empty");
  for (double k : s.kappa_b) require(k >= 1.0, "synth.kappa_b", "entries must be >= 1");
  require(s.kappa_v >= 1.0, "synth.kappa_v", "must be >= 1");
  require(s.sigma >= 0.0, "synth.sigma", "must be >= 0");
  require(s.sigma_q >= 0.0, "synth.sigma_q", "must be >= 0");
  require(s.bias_lipschitz >= 0.0, "synth.bias_lipschitz", "must be >= 0");
  require_unit_interval(s.bias_common_fraction, "synth.bias_common_fraction");
  require(s.rounds >= 1, "synth.rounds", "must be positive");
  require(s.sample_size >= 1 && s.sample_size <= s.n_clients, "synth.sample_size",
          "must lie in [1, synth.n_clients]");
  require(s.local_epochs >= 1, "synth.local_epochs", "must be positive");
  require(s.lr_local > 0.0, "synth.lr_local", "must be > 0");
  require(s.lr_global > 0.0, "synth.lr_global", "must be > 0");
  require(s.local_momentum >= 0.0 && s.local_momentum < 1.0, "synth.local_momentum",
          "must lie in [0, 1)");
  require_unit_interval(s.alpha, "synth.alpha");
}

void ExperimentConfig::apply_paper_scale() {
  data.n_train = 5000;
  data.n_test = 10000;
}

ExperimentConfig parse(std::istream& in) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    pt::ini_parser::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("config syntax: ") + e.what());
  }

  ExperimentConfig cfg;
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError(section + ": key outside of any [section]");
    }
    for (const auto& [key, value] : body) {
      const auto& table = fields();
      const auto it = std::find_if(table.begin(), table.end(), [&](const Field& f) {
        return f.section == section && f.key == key;
      });
      if (it == table.end()) throw ConfigError(section + "." + key + ": unknown key");
      it->set(cfg, trim(value.data()));
    }
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig parse(const std::string& text) {
  std::istringstream in(text);
  return parse(in);
}

ExperimentConfig load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  return parse(in);
}

std::string serialize(const ExperimentConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const Field& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out << '\n';
      section = f.section;
      out << '[' << section << "]\n";
    }
    out << f.key << " = " << f.get(cfg) << '\n';
  }
  return out.str();
}

}  // namespace qfl::config
