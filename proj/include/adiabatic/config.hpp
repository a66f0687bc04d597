#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "adiabatic/errors.hpp"
#include "adiabatic/fit.hpp"
#include "adiabatic/model.hpp"
#include "adiabatic/nogo.hpp"
#include "adiabatic/pathgeom.hpp"

namespace adiabatic {

using Json = nlohmann::ordered_json;

/// Malformed or inconsistent configuration.
class ConfigError : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

/// Strict reader for one JSON object: every member must be consumed,
/// anything left over is rejected by finish().
class Fields {
 public:
  Fields(const Json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  const std::string& where() const { return where_; }

  const Json& raw(const std::string& key) {
    if (!has(key)) throw ConfigError(where_ + ": missing field \"" + key + "\"");
    used_.insert(key);
    return j_.at(key);
  }

  double number(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_number()) throw ConfigError(path(key) + ": expected a number");
    return v.get<double>();
  }
  double number(const std::string& key, double fallback) {
    return has(key) ? number(key) : fallback;
  }

  int integer(const std::string& key, int fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_number_integer()) throw ConfigError(path(key) + ": expected an integer");
    return v.get<int>();
  }

  bool flag(const std::string& key, bool fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(path(key) + ": expected true or false");
    return v.get<bool>();
  }

  std::string text(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_string()) throw ConfigError(path(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::string text(const std::string& key, const std::string& fallback) {
    return has(key) ? text(key) : fallback;
  }

  std::vector<double> numbers(const std::string& key) {
    const Json& v = raw(key);
    if (!v.is_array()) throw ConfigError(path(key) + ": expected an array of numbers");
    std::vector<double> out;
    for (const Json& x : v) {
      if (!x.is_number()) throw ConfigError(path(key) + ": expected an array of numbers");
      out.push_back(x.get<double>());
    }
    return out;
  }
  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
    return has(key) ? numbers(key) : fallback;
  }

  std::vector<int> integers(const std::string& key, std::vector<int> fallback) {
    if (!has(key)) return fallback;
    const Json& v = raw(key);
    if (!v.is_array()) throw ConfigError(path(key) + ": expected an array of integers");
    std::vector<int> out;
    for (const Json& x : v) {
      if (!x.is_number_integer()) throw ConfigError(path(key) + ": expected an array of integers");
      out.push_back(x.get<int>());
    }
    return out;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) {
        throw ConfigError(where_ + ": unknown field \"" + it.key() + "\"");
      }
    }
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

 private:
  const Json& j_;
  std::string where_;
  std::set<std::string> used_;
};

namespace detail {

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw ConfigError(msg);
}

inline void require_positive(const std::vector<double>& xs, const std::string& what) {
  require(!xs.empty(), what + ": must not be empty");
  for (double x : xs) require(x > 0.0, what + ": values must be positive");
}

inline void require_increasing(const std::vector<double>& xs, const std::string& what) {
  for (std::size_t i = 1; i < xs.size(); ++i) {
    require(xs[i] > xs[i - 1], what + ": values must be strictly increasing");
  }
}

inline std::vector<double> read_csv_row(const std::string& line) {
  std::vector<double> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(cell, &used);
    } catch (const std::exception&) {
      throw ConfigError("not a number: \"" + cell + "\"");
    }
    while (used < cell.size() && std::isspace(static_cast<unsigned char>(cell[used]))) ++used;
    if (used != cell.size()) throw ConfigError("not a number: \"" + cell + "\"");
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// rate factors

/// {"kind": "power", "exponent": a} | {"kind": "constant", "value": c} |
/// {"kind": "table", "lambda": [...], "values": [...]}
struct FactorSpec {
  std::string kind = "power";
  double exponent = 2.0;
  double value = 1.0;
  std::vector<double> lambda;
  std::vector<double> values;

  Json to_json() const {
    Json j;
    j["kind"] = kind;
    if (kind == "power") j["exponent"] = exponent;
    if (kind == "constant") j["value"] = value;
    if (kind == "table") {
      j["lambda"] = lambda;
      j["values"] = values;
    }
    return j;
  }

  RateFactor build() const {
    if (kind == "power") return power_factor(exponent);
    if (kind == "constant") return constant_factor(value);
    return table_factor(lambda, values);
  }
};

inline FactorSpec parse_factor(const Json& j, const std::string& where) {
  Fields f(j, where);
  FactorSpec s;
  s.kind = f.text("kind");
  if (s.kind == "power") {
    s.exponent = f.number("exponent");
    detail::require(s.exponent == 0.0 || s.exponent >= 1.0,
                    f.path("exponent") + ": must be 0 or at least 1");
  } else if (s.kind == "constant") {
    s.value = f.number("value");
    detail::require(s.value > 0.0, f.path("value") + ": must be positive");
  } else if (s.kind == "table") {
    s.lambda = f.numbers("lambda");
    s.values = f.numbers("values");
    detail::require(s.lambda.size() >= 2 && s.lambda.size() == s.values.size(),
                    where + ": table needs >= 2 matched lambda/values entries");
    detail::require_increasing(s.lambda, f.path("lambda"));
    for (double v : s.values) detail::require(v > 0.0, f.path("values") + ": must be positive");
  } else {
    throw ConfigError(f.path("kind") + ": unknown factor kind \"" + s.kind + "\"");
  }
  f.finish();
  return s;
}

// ---------------------------------------------------------------------------
// path specifications

/// {"kind": ..., "params": {...}} for three_level, rotating_two_level,
/// constant, direct_sum, sampled and rescaled paths.
struct ModelSpec {
  std::string kind;
  double delta = 1.0;
  double tau = 1.0;
  std::string parameter = "arc_length";  ///< or "native"
  std::vector<double> diagonal;           ///< constant
  Index dim = 0;                          ///< constant (entries), sampled
  std::vector<double> entries;            ///< constant, row-major re/im interleaved
  std::optional<std::pair<double, double>> domain;
  std::vector<ModelSpec> parts;           ///< direct_sum parts, rescaled base
  FactorSpec factor;                      ///< rescaled
  std::string csv;                        ///< sampled, as written in the config
  std::vector<double> grid;               ///< sampled, loaded from csv
  std::vector<Operator> operators;

  bool has_parameter() const { return kind == "three_level" || kind == "rotating_two_level"; }

  Json to_json() const {
    Json p = Json::object();
    if (has_parameter()) {
      p["delta"] = delta;
      p["tau"] = tau;
      p["parameter"] = parameter;
    } else if (kind == "constant") {
      if (!diagonal.empty()) {
        p["diagonal"] = diagonal;
      } else {
        p["dim"] = dim;
        p["entries"] = entries;
      }
      if (domain) p["domain"] = {domain->first, domain->second};
    } else if (kind == "direct_sum") {
      p["parts"] = Json::array();
      for (const ModelSpec& m : parts) p["parts"].push_back(m.to_json());
    } else if (kind == "sampled") {
      p["csv"] = csv;
      p["dim"] = dim;
    } else if (kind == "rescaled") {
      p["base"] = parts.at(0).to_json();
      p["factor"] = factor.to_json();
    }
    Json j;
    j["kind"] = kind;
    j["params"] = p;
    return j;
  }
};

namespace detail {

inline Operator unpack_entries(const std::vector<double>& xs, std::size_t offset, Index dim) {
  Operator h(dim, dim);
  for (Index r = 0; r < dim; ++r) {
    for (Index c = 0; c < dim; ++c) {
      const std::size_t k = offset + 2 * static_cast<std::size_t>(r * dim + c);
      h(r, c) = Complex(xs[k], xs[k + 1]);
    }
  }
  return h;
}

/// Rows "s, re_00, im_00, re_01, im_01, ..."; a non-numeric first line is a header.
inline void load_sampled(ModelSpec& m, const std::filesystem::path& file, const std::string& where) {
  std::ifstream in(file);
  if (!in) throw ConfigError(where + ": cannot open " + file.string());
  const std::size_t width = 1 + 2 * static_cast<std::size_t>(m.dim * m.dim);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::vector<double> row;
    try {
      row = read_csv_row(line);
    } catch (const ConfigError& e) {
      if (lineno == 1 && m.grid.empty()) continue;
      throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (row.size() != width) {
      throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": expected " +
                        std::to_string(width) + " columns, found " + std::to_string(row.size()));
    }
    m.grid.push_back(row[0]);
    m.operators.push_back(unpack_entries(row, 1, m.dim));
  }
  require(m.grid.size() >= 4, where + ": sampled path needs at least 4 rows");
  require_increasing(m.grid, file.string() + " (parameter column)");
}

}  // namespace detail

inline ModelSpec parse_model(const Json& j, const std::filesystem::path& base_dir,
                             const std::string& where = "model") {
  Fields top(j, where);
  ModelSpec m;
  m.kind = top.text("kind");
  const Json empty = Json::object();
  Fields f(top.has("params") ? top.raw("params") : empty, where + ".params");
  top.finish();
  if (m.has_parameter()) {
    m.delta = f.number("delta", 1.0);
    m.tau = f.number("tau", 1.0);
    m.parameter = f.text("parameter", "arc_length");
    // delta = 0 is accepted here and reported by validation as a degenerate spectrum
    detail::require(m.delta >= 0.0, f.path("delta") + ": must be non-negative");
    detail::require(m.tau > 0.0, f.path("tau") + ": must be positive");
    detail::require(m.parameter == "arc_length" || m.parameter == "native",
                    f.path("parameter") + ": expected \"arc_length\" or \"native\"");
  } else if (m.kind == "constant") {
    if (f.has("diagonal")) {
      m.diagonal = f.numbers("diagonal");
      detail::require(m.diagonal.size() >= 2, f.path("diagonal") + ": need at least 2 levels");
      m.dim = static_cast<Index>(m.diagonal.size());
    } else {
      m.dim = f.integer("dim", 0);
      m.entries = f.numbers("entries");
      detail::require(m.dim >= 2, f.path("dim") + ": need at least 2");
      detail::require(m.entries.size() == static_cast<std::size_t>(2 * m.dim * m.dim),
                      f.path("entries") + ": expected 2 dim^2 numbers");
    }
    if (f.has("domain")) {
      const std::vector<double> d = f.numbers("domain");
      detail::require(d.size() == 2 && d[1] > d[0], f.path("domain") + ": expected [lo, hi]");
      m.domain = std::make_pair(d[0], d[1]);
    }
  } else if (m.kind == "direct_sum") {
    const Json& parts = f.raw("parts");
    detail::require(parts.is_array() && parts.size() >= 2,
                    f.path("parts") + ": expected an array of at least 2 paths");
    for (std::size_t i = 0; i < parts.size(); ++i) {
      m.parts.push_back(parse_model(parts[i], base_dir, f.path("parts") + "[" +
                                                            std::to_string(i) + "]"));
    }
  } else if (m.kind == "sampled") {
    m.csv = f.text("csv");
    m.dim = f.integer("dim", 0);
    detail::require(m.dim >= 2, f.path("dim") + ": need at least 2");
    const std::filesystem::path file = std::filesystem::path(m.csv).is_absolute()
                                           ? std::filesystem::path(m.csv)
                                           : base_dir / m.csv;
    detail::load_sampled(m, file, f.path("csv"));
  } else if (m.kind == "rescaled") {
    m.parts.push_back(parse_model(f.raw("base"), base_dir, f.path("base")));
    m.factor = parse_factor(f.raw("factor"), f.path("factor"));
  } else {
    throw ConfigError(where + ".kind: unknown path kind \"" + m.kind + "\"");
  }
  f.finish();
  return m;
}

/// Parts of the model whose parameters make every level coincide.
inline std::vector<std::string> zero_gap_parts(const ModelSpec& m, const std::string& where = "model") {
  std::vector<std::string> out;
  if (m.has_parameter() && m.delta == 0.0) out.push_back(where);
  for (std::size_t i = 0; i < m.parts.size(); ++i) {
    const std::string sub =
        where + (m.kind == "rescaled" ? ".base" : ".parts[" + std::to_string(i) + "]");
    for (std::string& s : zero_gap_parts(m.parts[i], sub)) out.push_back(std::move(s));
  }
  return out;
}

/// Parameter domain of the model path.
inline Domain model_domain(const ModelSpec& m) {
  if (m.kind == "sampled") return {m.grid.front(), m.grid.back()};
  if (m.kind == "constant" && m.domain) return {m.domain->first, m.domain->second};
  if (!m.parts.empty()) return model_domain(m.parts[0]);
  return {};
}

inline HamiltonianPath build_path(const ModelSpec& m) {
  if (m.kind == "three_level") {
    const ThreeLevelParams p{m.delta, m.tau};
    return m.parameter == "native" ? three_level_path(p) : three_level_lambda_path(p);
  }
  if (m.kind == "rotating_two_level") {
    const RotatingTwoLevelParams p{m.delta, m.tau};
    return m.parameter == "native" ? rotating_two_level_path(p) : rotating_two_level_lambda_path(p);
  }
  if (m.kind == "constant") {
    Operator h;
    if (!m.diagonal.empty()) {
      h = Operator::Zero(m.dim, m.dim);
      for (Index k = 0; k < m.dim; ++k) h(k, k) = m.diagonal[static_cast<std::size_t>(k)];
    } else {
      h = detail::unpack_entries(m.entries, 0, m.dim);
    }
    return m.domain ? constant_path(h, Domain{m.domain->first, m.domain->second})
                    : constant_path(h);
  }
  if (m.kind == "direct_sum") {
    HamiltonianPath out = build_path(m.parts[0]);
    for (std::size_t i = 1; i < m.parts.size(); ++i) out = direct_sum(out, build_path(m.parts[i]));
    return out;
  }
  if (m.kind == "sampled") return sampled_path(m.grid, m.operators);
  const RateFactor f = m.factor.build();
  return scaled_path(build_path(m.parts.at(0)), f.value, f.slope);
}

// ---------------------------------------------------------------------------
// schedules

/// {"kind": "natural"|"constant"|"polynomial"|"table", ..., "slowdown": s_c,
/// "length": L}. "natural" is the model's own traversal rate.
struct ScheduleSpec {
  std::string kind = "natural";
  double velocity = 1.0;
  std::vector<double> coefficients;
  std::vector<double> lambda;
  std::vector<double> rates;
  double slowdown = 1.0;
  std::optional<double> length;
  int nodes = 256;

  Json to_json() const {
    Json j;
    j["kind"] = kind;
    if (kind == "constant") j["velocity"] = velocity;
    if (kind == "polynomial") j["coefficients"] = coefficients;
    if (kind == "table") {
      j["lambda"] = lambda;
      j["rates"] = rates;
    }
    j["slowdown"] = slowdown;
    if (length) j["length"] = *length;
    j["nodes"] = nodes;
    return j;
  }
};

inline ScheduleSpec parse_schedule(const Json& j, const std::string& where = "schedule") {
  Fields f(j, where);
  ScheduleSpec s;
  s.kind = f.text("kind", "natural");
  if (s.kind == "constant") {
    s.velocity = f.number("velocity");
    detail::require(s.velocity > 0.0, f.path("velocity") + ": must be positive");
  } else if (s.kind == "polynomial") {
    s.coefficients = f.numbers("coefficients");
    detail::require(!s.coefficients.empty(), f.path("coefficients") + ": must not be empty");
  } else if (s.kind == "table") {
    s.lambda = f.numbers("lambda");
    s.rates = f.numbers("rates");
    detail::require(s.lambda.size() >= 2 && s.lambda.size() == s.rates.size(),
                    where + ": table needs >= 2 matched lambda/rates entries");
    detail::require_increasing(s.lambda, f.path("lambda"));
  } else if (s.kind != "natural") {
    throw ConfigError(f.path("kind") + ": unknown velocity kind \"" + s.kind + "\"");
  }
  s.slowdown = f.number("slowdown", 1.0);
  detail::require(s.slowdown > 0.0, f.path("slowdown") + ": must be positive");
  if (f.has("length")) {
    s.length = f.number("length");
    detail::require(*s.length > 0.0, f.path("length") + ": must be positive");
  }
  s.nodes = f.integer("nodes", 256);
  detail::require(s.nodes >= 1, f.path("nodes") + ": must be positive");
  f.finish();
  return s;
}

inline VelocityProfile build_profile(const ScheduleSpec& s, const ModelSpec& m) {
  if (s.kind == "constant") return VelocityProfile::constant(s.velocity);
  if (s.kind == "polynomial") return VelocityProfile::polynomial(s.coefficients);
  if (s.kind == "table") return VelocityProfile::table(s.lambda, s.rates);
  if (m.kind == "three_level") {
    const ThreeLevelParams p{m.delta, m.tau};
    if (m.parameter == "native") return VelocityProfile::constant(1.0 / m.tau);
    const double tau = m.tau;
    return VelocityProfile::custom(three_level_natural_velocity(p), [tau](double l) {
      return 1.0 / (tau * std::sqrt(1.0 + 2.0 * l));
    });
  }
  if (m.kind == "rotating_two_level") {
    if (m.parameter == "native") return VelocityProfile::constant(1.0 / m.tau);
    return VelocityProfile::constant(rotating_natural_velocity({m.delta, m.tau}));
  }
  throw ConfigError("schedule.kind: \"natural\" needs a three_level or rotating_two_level model");
}

inline Schedule build_schedule(const ScheduleSpec& s, const ModelSpec& m, double length,
                               const QuadratureOptions& q) {
  return Schedule(build_profile(s, m), s.slowdown, length, static_cast<std::size_t>(s.nodes), q);
}

}  // namespace adiabatic
