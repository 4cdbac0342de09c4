#include "novas/harness/config.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

namespace novas::harness {

using nlohmann::json;

namespace {

json list(std::initializer_list<double> v) { return json(std::vector<double>(v)); }

std::vector<ConfigKey> build_schema() {
  using K = ValueKind;
  return {
      {"experiment", K::String, nullptr, "spen | cartpole | portfolio | bench"},
      {"seed", K::Integer, nullptr, "master seed"},
      {"jobs", K::Integer, 1, "worker threads for evaluation rollouts"},
      {"output.dir", K::String, "runs", "artifact directory"},
      {"output.wall_time", K::Boolean, true, "emit wall-clock columns (off for byte-identical reruns)"},
      {"output.checkpoint_every", K::Integer, 0, "also checkpoint every k outer steps (0: final only)"},
      {"checkpoint", K::String, "", "checkpoint to evaluate (default: <output.dir>/checkpoint)"},
      {"resume", K::String, "", "checkpoint to resume training from"},

      {"novas.samples", K::Integer, nullptr, "samples per inner iteration"},
      {"novas.iters", K::Integer, nullptr, "inner iterations"},
      {"novas.lr", K::Number, 1.0, "mean step size"},
      {"novas.shape", K::String, "exp", "exp | sigmoid"},
      {"novas.kappa", K::Number, 5.0, "shape sharpness"},
      {"novas.elite_frac", K::Number, 0.1, "elite fraction for the sigmoid shape"},
      {"novas.epsilon", K::Number, 1e-3, "variance floor"},
      {"novas.normalize", K::Boolean, true, "min-max normalize objective values per row"},
      {"novas.mode", K::String, "detached", "detached | unrolled"},
      {"novas.mean0", K::Number, 0.0, "initial search mean"},
      {"novas.sigma0", K::Number, 1.0, "initial search stddev"},

      {"inner.kind", K::String, "novas", "spen inner optimizer: novas | cem | gd"},
      {"inner.cem_elites", K::Integer, 10, "CEM elite count"},
      {"inner.gd_steps", K::Integer, 10, "unrolled gradient-descent steps"},
      {"inner.gd_lr", K::Number, 0.1, "unrolled gradient-descent step size"},
      {"inner.gd_lr_grid", K::NumberList, json::array(), "if set, pick the step size by validation loss"},

      {"dataset.train", K::Integer, 1000, "training points"},
      {"dataset.test", K::Integer, 250, "test (and validation) points"},
      {"energy.width", K::Integer, 32, "energy network hidden width"},
      {"energy.layers", K::Integer, 4, "energy network hidden layers"},
      {"sweep.iterations", K::NumberList, list({1, 2, 5, 10, 20, 50, 100}), "inner iteration counts to evaluate"},
      {"landscape.x_points", K::Integer, 100, "grid points over [0, 2 pi]"},
      {"landscape.y_points", K::Integer, 200, "grid points over y"},
      {"landscape.y_min", K::Number, -6.0, "lower y bound"},
      {"landscape.y_max", K::Number, 4.0, "upper y bound"},

      {"optimizer.lr", K::Number, 5e-3, "Adam learning rate"},
      {"optimizer.batch", K::Integer, 64, "batch size"},
      {"optimizer.epochs", K::Integer, 60, "spen epochs"},
      {"optimizer.iterations", K::Integer, 3500, "fbsde iterations"},
      {"optimizer.milestones", K::NumberList, json::array(), "updates after which the lr decays"},
      {"optimizer.decay", K::Number, 0.1, "lr decay factor per milestone"},

      {"cartpole.steps", K::Integer, 75, "time steps"},
      {"cartpole.horizon", K::Number, 1.5, "seconds"},
      {"cartpole.noise", K::Number, 0.5, "velocity noise stddev"},
      {"cartpole.control_cost", K::Number, 0.1, "R"},

      {"market.file", K::String, "", "load the market from JSON instead of generating it"},
      {"market.seed", K::Integer, -1, "market generator seed (-1: master seed)"},
      {"market.stocks", K::Integer, 10, "N"},
      {"market.traded", K::Integer, 4, "traded stocks"},
      {"market.factors", K::Integer, 3, "covariance factors"},
      {"market.risk_free", K::Number, 0.01, "per year"},
      {"market.steps", K::Integer, 52, "time steps"},
      {"market.horizon", K::Number, 1.0, "years"},
      {"market.cost_scale", K::Number, 500.0, "terminal cost scale q"},
      {"market.sharpness", K::Number, 10.0, "terminal softplus sharpness beta"},

      {"network.hidden", K::Integer, 16, "LSTM width"},
      {"network.layers", K::Integer, 2, "LSTM layers"},
      {"network.hessian_head", K::Boolean, false, "predict one Hessian column"},
      {"network.trainable_initial_gradient", K::Boolean, false, "free V_x at t = 0"},
      {"network.initial_value", K::Number, 0.0, "initial V_0"},
      {"network.input_shift", K::NumberList, json::array(), "LSTM input shift"},
      {"network.input_scale", K::NumberList, json::array(), "LSTM input scale"},
      {"loss.weights", K::NumberList, list({1, 1, 0, 1, 1, 0}), "six loss weights"},
      {"loss.delta", K::Number, 50.0, "Huber threshold"},
      {"train.validate_every", K::Integer, 100, "validation period (0: never)"},
      {"train.validation_batch", K::Integer, 128, "validation rollouts"},

      {"evaluation.samples", K::Integer, 100, "inference search samples"},
      {"evaluation.iters", K::Integer, 5, "inference search iterations"},
      {"evaluation.rollouts", K::Integer, 128, "test rollouts"},
      {"evaluation.chunk", K::Integer, 32, "rollouts per work unit"},
      {"evaluation.baselines", K::Boolean, true, "also evaluate baselines (portfolio)"},

      {"bench.seeds", K::Integer, 100, "trials per function and method"},
      {"bench.sigma_sweep", K::NumberList, list({0.3, 1.0, 3.0}), "initial stddevs for the NOVAS sweep"},
      {"bench.tolerance", K::Number, 1e-2, "distance to the optimum counted as success"},
  };
}

const std::map<std::string, const ConfigKey*>& index() {
  static const auto map = [] {
    std::map<std::string, const ConfigKey*> m;
    for (const auto& k : config_schema()) m[k.name] = &k;
    return m;
  }();
  return map;
}

const ConfigKey& lookup(const std::string& key) {
  const auto it = index().find(key);
  if (it == index().end()) throw ConfigError("unknown config key '" + key + "'");
  return *it->second;
}

const char* kind_name(ValueKind kind) {
  switch (kind) {
    case ValueKind::Integer: return "an integer";
    case ValueKind::Number: return "a number";
    case ValueKind::Boolean: return "a boolean";
    case ValueKind::String: return "a string";
    case ValueKind::NumberList: return "a list of numbers";
  }
  return "?";
}

json checked(const ConfigKey& key, json v) {
  bool ok = false;
  switch (key.kind) {
    case ValueKind::Integer: ok = v.is_number_integer(); break;
    case ValueKind::Number:
      ok = v.is_number();
      if (ok) v = v.get<double>();
      break;
    case ValueKind::Boolean: ok = v.is_boolean(); break;
    case ValueKind::String: ok = v.is_string(); break;
    case ValueKind::NumberList:
      ok = v.is_array() && std::all_of(v.begin(), v.end(), [](const json& e) { return e.is_number(); });
      break;
  }
  if (!ok) throw ConfigError("config key '" + key.name + "' must be " + kind_name(key.kind) + ", got " + v.dump());
  return v;
}

void flatten(const json& node, const std::string& prefix, json& out) {
  for (const auto& [k, v] : node.items()) {
    const std::string name = prefix.empty() ? k : prefix + "." + k;
    if (v.is_object()) {
      flatten(v, name, out);
    } else {
      out[name] = checked(lookup(name), v);
    }
  }
}

json nest(const json& flat) {
  json out = json::object();
  for (const auto& [k, v] : flat.items()) out[json::json_pointer("/" + [&] {
    std::string p = k;
    std::replace(p.begin(), p.end(), '.', '/');
    return p;
  }())] = v;
  return out;
}

json parse_value(const ConfigKey& key, const std::string& text) {
  switch (key.kind) {
    case ValueKind::String: return text;
    case ValueKind::NumberList: {
      if (!text.empty() && text.front() == '[') return json::parse(text);
      json arr = json::array();
      std::stringstream ss(text);
      for (std::string item; std::getline(ss, item, ',');) {
        if (!item.empty()) arr.push_back(json::parse(item));
      }
      return arr;
    }
    default:
      try {
        return json::parse(text);
      } catch (const json::parse_error&) {
        throw ConfigError("config key '" + key.name + "' must be " + kind_name(key.kind) + ", got '" + text + "'");
      }
  }
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = build_schema();
  return schema;
}

RunConfig RunConfig::from_json(const json& doc) {
  if (!doc.is_object()) throw ConfigError("config document must be a JSON object");
  RunConfig cfg;
  flatten(doc, "", cfg.values_);
  return cfg;
}

RunConfig RunConfig::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError("config file '" + path + "': " + e.what());
  }
  return from_json(doc);
}

void RunConfig::set(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  set(key, parse_value(lookup(key), assignment.substr(eq + 1)));
}

void RunConfig::set(const std::string& key, json value) { values_[key] = checked(lookup(key), std::move(value)); }

void RunConfig::merge(const RunConfig& other) {
  for (const auto& [k, v] : other.values_.items()) values_[k] = v;
}

void RunConfig::validate() const {
  for (const auto& key : config_schema()) {
    if (key.fallback.is_null() && !values_.contains(key.name)) {
      throw ConfigError("missing required config key '" + key.name + "'");
    }
  }
  const std::string exp = text("experiment");
  if (exp != "spen" && exp != "cartpole" && exp != "portfolio" && exp != "bench") {
    throw ConfigError("config key 'experiment' must be spen, cartpole, portfolio or bench, got '" + exp + "'");
  }
}

bool RunConfig::has(const std::string& key) const {
  lookup(key);
  return values_.contains(key);
}

const json& RunConfig::value(const std::string& key) const {
  const auto& spec = lookup(key);
  if (values_.contains(key)) return values_.at(key);
  if (spec.fallback.is_null()) throw ConfigError("missing required config key '" + key + "'");
  return spec.fallback;
}

std::int64_t RunConfig::integer(const std::string& key) const { return value(key).get<std::int64_t>(); }

std::size_t RunConfig::count(const std::string& key) const {
  const auto v = integer(key);
  if (v < 0) throw ConfigError("config key '" + key + "' must be non-negative, got " + std::to_string(v));
  return static_cast<std::size_t>(v);
}

double RunConfig::number(const std::string& key) const { return value(key).get<double>(); }
bool RunConfig::flag(const std::string& key) const { return value(key).get<bool>(); }
std::string RunConfig::text(const std::string& key) const { return value(key).get<std::string>(); }
std::vector<double> RunConfig::numbers(const std::string& key) const {
  return value(key).get<std::vector<double>>();
}

json RunConfig::explicit_values() const { return nest(values_); }

json RunConfig::resolved() const {
  json flat = json::object();
  for (const auto& key : config_schema()) {
    if (values_.contains(key.name)) {
      flat[key.name] = values_.at(key.name);
    } else if (!key.fallback.is_null()) {
      flat[key.name] = key.fallback;
    }
  }
  return nest(flat);
}

}  // namespace novas::harness
