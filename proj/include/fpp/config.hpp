#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "weight_field.hpp"

namespace fpp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr int kSchemaVersion = 1;

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> k{"mu",          "chi",         "xi",           "chi_u_excess",      "tail",
                                          "rate_curve",  "slab_certify", "bad_scan",    "dark_scan",         "face_profile",
                                          "block_chain_upper", "block_chain_lower", "exact_oracle"};
  return k;
}

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string kind;
  std::uint64_t seed = 0;
  int dimension = 2;
  DistributionSpec distribution = Constant{0.05};
  std::vector<double> direction;  // unit length
  std::string shape = "euclidean";
  std::size_t n_samples = 0;
  unsigned workers = 1;
  std::string output_dir = "fpp_out";
  std::optional<std::uint64_t> budget;
  bool svg = false;
  // Kind-specific parameters with defaults filled in.
  nlohmann::ordered_json params = nlohmann::ordered_json::object();
};

namespace detail {

enum class ParamType { integer, number, integer_list, number_list, side, number_or_estimate, boolean };

struct ParamRule {
  ParamType type;
  bool required = false;
  nlohmann::ordered_json fallback = nullptr;  // default when absent; null means "leave absent"
};

using Schema = std::vector<std::pair<std::string, ParamRule>>;

inline const Schema& kind_schema(const std::string& kind) {
  using T = ParamType;
  const ParamRule mu_ref{T::number_or_estimate, false, "estimate"};
  const ParamRule mu_samples{T::integer, false, nullptr};
  static const std::map<std::string, Schema> schemas{
      {"mu", {{"N_list", {T::integer_list, true}}}},
      {"chi", {{"N_list", {T::integer_list, true}}}},
      {"xi", {{"N_list", {T::integer_list, true}}}},
      {"chi_u_excess",
       {{"N_list", {T::integer_list, true}},
        {"chi_probe", {T::number, true}},
        {"mu_ref", mu_ref},
        {"mu_samples", mu_samples}}},
      {"tail",
       {{"N", {T::integer, true}},
        {"side", {T::side, true}},
        {"a", {T::number}},
        {"zeta", {T::number}},
        {"mu_ref", mu_ref},
        {"mu_samples", mu_samples}}},
      {"rate_curve",
       {{"N", {T::integer, true}},
        {"side", {T::side, true}},
        {"zeta_grid", {T::number_list, true}},
        {"mu_ref", mu_ref},
        {"mu_samples", mu_samples}}},
      {"slab_certify",
       {{"N", {T::integer, true}},
        {"a", {T::number, true}},
        {"M", {T::integer, true}},
        {"eps", {T::number, false, 0.0}},
        {"instances", {T::integer, false, 1}},
        {"mu_ref", mu_ref},
        {"mu_samples", mu_samples}}},
      {"bad_scan",
       {{"N", {T::integer, true}},
        {"M", {T::integer, true}},
        {"m", {T::integer, true}},
        {"a", {T::number, true}},
        {"eps", {T::number, false, 0.0}},
        {"b", {T::number, true}},
        {"K", {T::number, true}},
        {"chi_bar_eps", {T::number, true}},
        {"decimate", {T::boolean, false, false}},
        {"mu_ref", mu_ref},
        {"mu_samples", mu_samples}}},
      {"dark_scan",
       {{"N", {T::integer, true}},
        {"b", {T::number, true}},
        {"K_hat", {T::number, true}},
        {"A", {T::number, true}},
        {"mu_ref", mu_ref},
        {"mu_samples", mu_samples}}},
      {"face_profile",
       {{"N", {T::integer, true}},
        {"K", {T::number, true}},
        {"J", {T::integer, true}},
        {"b_lo", {T::number, true}},
        {"L", {T::integer, true}},
        {"window", {T::number}},
        {"mu_ref", mu_ref},
        {"mu_samples", mu_samples}}},
      {"block_chain_upper",
       {{"N", {T::integer, true}},
        {"zeta", {T::number, true}},
        {"chi_hat", {T::number, false, 1.0 / 3}},
        {"eps", {T::number, false, 0.1}},
        {"A", {T::number, false, 2.0}},
        {"instances", {T::integer, false, 1}},
        {"mu_ref", mu_ref},
        {"mu_samples", mu_samples}}},
      {"block_chain_lower",
       {{"N", {T::integer, true}},
        {"a", {T::number}},
        {"zeta", {T::number}},
        {"chi_lower", {T::number, false, 1.0 / 3}},
        {"instances", {T::integer, false, 1}},
        {"mu_ref", mu_ref},
        {"mu_samples", mu_samples}}},
      {"exact_oracle",
       {{"box_lo", {T::integer_list, true}},
        {"box_hi", {T::integer_list, true}},
        {"source", {T::integer_list}},
        {"target", {T::integer_list}}}},
  };
  auto it = schemas.find(kind);
  if (it == schemas.end()) throw ConfigError("unknown experiment kind '" + kind + "'");
  return it->second;
}

template <class J>
void reject_unknown(const J& obj, const std::set<std::string>& allowed, const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key())) throw ConfigError("unknown key '" + it.key() + "' in " + where);
}

template <class J>
double number_of(const J& v, const std::string& name) {
  if (!v.is_number()) throw ConfigError("'" + name + "' must be a number");
  const double x = v.template get<double>();
  if (!std::isfinite(x)) throw ConfigError("'" + name + "' must be finite");
  return x;
}

template <class J>
std::int64_t integer_of(const J& v, const std::string& name) {
  if (!v.is_number_integer()) throw ConfigError("'" + name + "' must be an integer");
  return v.template get<std::int64_t>();
}

template <class J>
nlohmann::ordered_json check_param(const J& v, ParamType t, const std::string& name) {
  using T = ParamType;
  switch (t) {
    case T::integer:
      return integer_of(v, name);
    case T::number:
      return number_of(v, name);
    case T::boolean:
      if (!v.is_boolean()) throw ConfigError("'" + name + "' must be true or false");
      return v.template get<bool>();
    case T::side: {
      if (!v.is_string()) throw ConfigError("'" + name + "' must be \"upper\" or \"lower\"");
      const auto s = v.template get<std::string>();
      if (s != "upper" && s != "lower") throw ConfigError("'" + name + "' must be \"upper\" or \"lower\"");
      return s;
    }
    case T::number_or_estimate:
      if (v.is_string()) {
        if (v.template get<std::string>() != "estimate") throw ConfigError("'" + name + "' must be a number or \"estimate\"");
        return "estimate";
      }
      return number_of(v, name);
    case T::integer_list:
    case T::number_list: {
      if (!v.is_array() || v.empty()) throw ConfigError("'" + name + "' must be a non-empty list");
      nlohmann::ordered_json out = nlohmann::ordered_json::array();
      for (const auto& x : v) {
        if (t == T::integer_list)
          out.push_back(integer_of(x, name));
        else
          out.push_back(number_of(x, name));
      }
      return out;
    }
  }
  return nullptr;
}

template <class J>
DistributionSpec parse_distribution(const J& d, int dimension) {
  if (!d.is_object()) throw ConfigError("'distribution' must be an object");
  if (!d.contains("type") || !d["type"].is_string()) throw ConfigError("'distribution.type' is required");
  const auto type = d["type"].template get<std::string>();
  auto num = [&](const char* key) {
    if (!d.contains(key)) throw ConfigError(std::string("'distribution.") + key + "' is required");
    return number_of(d[key], std::string("distribution.") + key);
  };
  DistributionSpec spec;
  if (type == "constant") {
    reject_unknown(d, {"type", "value"}, "distribution");
    spec = Constant{num("value")};
  } else if (type == "uniform") {
    reject_unknown(d, {"type", "lo", "hi"}, "distribution");
    spec = Uniform{num("lo"), num("hi")};
  } else if (type == "two_point") {
    reject_unknown(d, {"type", "low", "high", "p"}, "distribution");
    spec = TwoPoint{num("low"), num("high"), num("p")};
  } else if (type == "truncated_exponential") {
    reject_unknown(d, {"type", "rate", "cap"}, "distribution");
    spec = TruncatedExponential{num("rate"), num("cap")};
  } else {
    throw ConfigError("unknown distribution type '" + type + "'");
  }
  try {
    validate_distribution(spec, static_cast<std::size_t>(dimension));
  } catch (const InvalidDistribution& e) {
    throw ConfigError(std::string("invalid distribution: ") + e.what());
  }
  return spec;
}

}  // namespace detail

inline nlohmann::ordered_json distribution_json(const DistributionSpec& s) {
  return std::visit(
      [](const auto& v) -> nlohmann::ordered_json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, Constant>) return {{"type", "constant"}, {"value", v.value}};
        if constexpr (std::is_same_v<T, Uniform>) return {{"type", "uniform"}, {"lo", v.lo}, {"hi", v.hi}};
        if constexpr (std::is_same_v<T, TwoPoint>)
          return {{"type", "two_point"}, {"low", v.low}, {"high", v.high}, {"p", v.p}};
        if constexpr (std::is_same_v<T, TruncatedExponential>)
          return {{"type", "truncated_exponential"}, {"rate", v.rate}, {"cap", v.cap}};
      },
      s);
}

// Parses and validates; throws ConfigError on the first problem.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::ParamType;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  detail::reject_unknown(j,
                         {"schema_version", "kind", "seed", "dimension", "distribution", "direction", "shape",
                          "n_samples", "workers", "output_dir", "budget", "svg", "params"},
                         "config");
  ExperimentConfig c;
  if (!j.contains("schema_version")) throw ConfigError("'schema_version' is required");
  c.schema_version = static_cast<int>(detail::integer_of(j["schema_version"], "schema_version"));
  if (c.schema_version != kSchemaVersion)
    throw ConfigError("unsupported schema_version " + std::to_string(c.schema_version));
  if (!j.contains("kind") || !j["kind"].is_string()) throw ConfigError("'kind' is required");
  c.kind = j["kind"].get<std::string>();
  const auto& schema = detail::kind_schema(c.kind);
  if (!j.contains("seed")) throw ConfigError("'seed' is required");
  if (!j["seed"].is_number_unsigned() && !(j["seed"].is_number_integer() && j["seed"].get<std::int64_t>() >= 0))
    throw ConfigError("'seed' must be a non-negative integer");
  c.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("dimension")) c.dimension = static_cast<int>(detail::integer_of(j["dimension"], "dimension"));
  if (c.dimension < 2 || c.dimension > 4) throw ConfigError("'dimension' must be 2, 3 or 4");
  if (!j.contains("distribution")) throw ConfigError("'distribution' is required");
  c.distribution = detail::parse_distribution(j["distribution"], c.dimension);

  c.direction.assign(static_cast<std::size_t>(c.dimension), 0.0);
  c.direction[0] = 1;
  if (j.contains("direction")) {
    const auto d = detail::check_param(j["direction"], ParamType::number_list, "direction");
    if (d.size() != static_cast<std::size_t>(c.dimension)) throw ConfigError("'direction' must have length d");
    double n = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      c.direction[i] = d[i].get<double>();
      n += c.direction[i] * c.direction[i];
    }
    if (!(n > 0)) throw ConfigError("'direction' must be nonzero");
    for (double& x : c.direction) x /= std::sqrt(n);
  }
  if (j.contains("shape")) {
    if (!j["shape"].is_string()) throw ConfigError("'shape' must be a string");
    c.shape = j["shape"].get<std::string>();
    if (c.shape != "euclidean" && c.shape != "l1") throw ConfigError("'shape' must be \"euclidean\" or \"l1\"");
  }
  if (j.contains("n_samples")) {
    const auto n = detail::integer_of(j["n_samples"], "n_samples");
    if (n < 1) throw ConfigError("'n_samples' must be positive");
    c.n_samples = static_cast<std::size_t>(n);
  }
  if (j.contains("workers")) {
    const auto w = detail::integer_of(j["workers"], "workers");
    if (w < 1 || w > 1024) throw ConfigError("'workers' must be in [1, 1024]");
    c.workers = static_cast<unsigned>(w);
  }
  if (j.contains("output_dir")) {
    if (!j["output_dir"].is_string() || j["output_dir"].get<std::string>().empty())
      throw ConfigError("'output_dir' must be a non-empty string");
    c.output_dir = j["output_dir"].get<std::string>();
  }
  if (j.contains("budget")) {
    const auto b = detail::integer_of(j["budget"], "budget");
    if (b < 1) throw ConfigError("'budget' must be positive");
    c.budget = static_cast<std::uint64_t>(b);
  }
  if (j.contains("svg")) {
    if (!j["svg"].is_boolean()) throw ConfigError("'svg' must be true or false");
    c.svg = j["svg"].get<bool>();
  }

  const nlohmann::json params = j.contains("params") ? j["params"] : nlohmann::json::object();
  if (!params.is_object()) throw ConfigError("'params' must be an object");
  std::set<std::string> allowed;
  for (const auto& [name, rule] : schema) allowed.insert(name);
  detail::reject_unknown(params, allowed, "params for kind '" + c.kind + "'");
  for (const auto& [name, rule] : schema) {
    if (params.contains(name))
      c.params[name] = detail::check_param(params[name], rule.type, "params." + name);
    else if (rule.required)
      throw ConfigError("'params." + name + "' is required for kind '" + c.kind + "'");
    else if (!rule.fallback.is_null())
      c.params[name] = rule.fallback;
  }

  // Cross-field checks.
  const bool has_a = c.params.contains("a"), has_zeta = c.params.contains("zeta");
  if ((c.kind == "tail" || c.kind == "block_chain_lower") && has_a == has_zeta)
    throw ConfigError("exactly one of 'params.a' and 'params.zeta' is required");
  const bool estimator = c.kind == "mu" || c.kind == "chi" || c.kind == "xi" || c.kind == "chi_u_excess" ||
                         c.kind == "tail" || c.kind == "rate_curve";
  if (estimator && c.n_samples == 0) throw ConfigError("'n_samples' is required for kind '" + c.kind + "'");
  if (c.params.contains("mu_ref") && c.params["mu_ref"].is_string()) {
    if (!c.params.contains("mu_samples")) {
      if (c.n_samples == 0) throw ConfigError("'params.mu_samples' or 'n_samples' is needed to estimate mu_ref");
      c.params["mu_samples"] = c.n_samples;
    }
    if (c.params["mu_samples"].get<std::int64_t>() < 2) throw ConfigError("'params.mu_samples' must be at least 2");
  }
  for (const char* key : {"N", "M", "J", "L", "instances"})
    if (c.params.contains(key) && c.params[key].get<std::int64_t>() < 1)
      throw ConfigError(std::string("'params.") + key + "' must be positive");
  if (c.params.contains("N_list"))
    for (const auto& n : c.params["N_list"])
      if (n.get<std::int64_t>() < 1) throw ConfigError("'params.N_list' entries must be positive");
  for (const char* key : {"box_lo", "box_hi", "source", "target"})
    if (c.params.contains(key) && c.params[key].size() != static_cast<std::size_t>(c.dimension))
      throw ConfigError(std::string("'params.") + key + "' must have length d");
  if (c.kind == "exact_oracle" && !std::holds_alternative<TwoPoint>(c.distribution))
    throw ConfigError("exact_oracle needs a two_point distribution");
  return c;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(j);
}

}  // namespace fpp
