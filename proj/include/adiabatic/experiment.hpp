#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "adiabatic/asymptotics.hpp"
#include "adiabatic/config.hpp"
#include "adiabatic/evolve.hpp"
#include "adiabatic/io.hpp"
#include "adiabatic/metrics.hpp"
#include "adiabatic/nogo.hpp"
#include "adiabatic/pathgeom.hpp"

namespace adiabatic {

inline constexpr const char* kVersion = "0.1.0";

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int config_error = 2;
inline constexpr int numerical_failure = 3;
}  // namespace exit_code

inline constexpr double kMinTolerance = 1e-12;
inline constexpr double kMaxTolerance = 1e-4;

struct Tolerances {
  double quadrature = 1e-8;   ///< relative, adaptive Simpson
  double integrator = 1e-9;   ///< state change between refinements

  Json to_json() const { return Json{{"quadrature", quadrature}, {"integrator", integrator}}; }
};

inline std::vector<double> default_counterexample_lengths() {
  std::vector<double> out;
  for (int k = 0; k < 10; ++k) out.push_back(10.0 * std::pow(20.0, k / 9.0));
  return out;
}

struct PathLengthParams {
  double s_start = 0.0;
  double s_end = 1.0;
  int samples = 1;

  Json to_json() const { return {{"s_start", s_start}, {"s_end", s_end}, {"samples", samples}}; }
};

struct CounterexampleParams {
  std::vector<double> lengths = default_counterexample_lengths();
  double sample_step = 0.05;
  double max_phase_step = 0.025;
  double plateau_tolerance = 0.005;
  FitWindow window = FitWindow::largest_decade;

  Json to_json() const {
    return {{"lengths", lengths},
            {"sample_step", sample_step},
            {"max_phase_step", max_phase_step},
            {"plateau_tolerance", plateau_tolerance},
            {"fit_window", to_string(window)}};
  }
};

struct PeriodicParams {
  std::string mode = "match";  ///< or "fixed_slowdown"
  double eps_target = 0.005;
  std::vector<int> cycles{4, 8, 16, 32, 64};
  double slowdown = 0.0;       ///< fixed_slowdown only
  double initial_slowdown = 1.0;
  double match_tolerance = 0.02;
  int max_iterations = 40;
  double guard_threshold = 0.05;
  double superlinear_margin = 0.02;
  double max_residual = 0.05;
  FitWindow window = FitWindow::largest_decade;

  Json to_json() const {
    Json j{{"mode", mode}, {"cycles", cycles}};
    if (mode == "fixed_slowdown") {
      j["slowdown"] = slowdown;
      return j;
    }
    j["eps_target"] = eps_target;
    j["initial_slowdown"] = initial_slowdown;
    j["match_tolerance"] = match_tolerance;
    j["max_iterations"] = max_iterations;
    j["guard_threshold"] = guard_threshold;
    j["superlinear_margin"] = superlinear_margin;
    j["max_residual"] = max_residual;
    j["fit_window"] = to_string(window);
    return j;
  }
};

struct NogoParams {
  FactorSpec factor;
  std::vector<double> lengths{5, 10, 20, 40};
  bool integrate = true;
  std::optional<double> pin;
  int gap_samples = 512;
  int state_samples = 10;
  FitWindow window = FitWindow::largest_decade;

  Json to_json() const {
    Json j{{"factor", factor.to_json()}, {"lengths", lengths},       {"integrate", integrate},
           {"gap_samples", gap_samples}, {"state_samples", state_samples}, {"fit_window", to_string(window)}};
    if (pin) j["pin"] = *pin;
    return j;
  }
};

struct QdSweepParams {
  std::vector<double> slowdowns{1, 2, 4, 8, 16};
  std::string f = "identity";
  bool integrate = true;
  int gap_samples = 1024;

  Json to_json() const {
    return {{"slowdowns", slowdowns}, {"f", f}, {"integrate", integrate}, {"gap_samples", gap_samples}};
  }
};

struct B1Params {
  std::vector<double> slowdowns{10, 20, 40, 80};
  int frame_points = 400;
  bool integrate = true;

  Json to_json() const {
    return {{"slowdowns", slowdowns}, {"frame_points", frame_points}, {"integrate", integrate}};
  }
};

using ExperimentParams = std::variant<PathLengthParams, CounterexampleParams, PeriodicParams,
                                      NogoParams, QdSweepParams, B1Params>;

struct ExperimentConfig {
  std::string experiment;
  ModelSpec model;
  ScheduleSpec schedule;
  bool has_schedule = false;
  Tolerances tolerances;
  ExperimentParams params;
  std::string output_dir;
  int jobs = 1;
  std::filesystem::path base_dir;

  double length() const { return schedule.length.value_or(0.0); }

  Json to_json() const {
    Json j;
    j["experiment"] = experiment;
    j["model"] = model.to_json();
    if (has_schedule) j["schedule"] = schedule.to_json();
    j["tolerances"] = tolerances.to_json();
    j["params"] = std::visit([](const auto& p) { return p.to_json(); }, params);
    j["output_dir"] = output_dir;
    j["jobs"] = jobs;
    return j;
  }
};

/// Named increasing functions accepted for the generic_f variant.
inline std::function<double(double)> named_function(const std::string& name) {
  if (name == "identity") return [](double x) { return x; };
  if (name == "square") return [](double x) { return x * x; };
  if (name == "cube") return [](double x) { return x * x * x; };
  if (name == "sqrt") return [](double x) { return std::sqrt(x); };
  if (name == "exp") return [](double x) { return std::exp(x); };
  if (name == "log1p") return [](double x) { return std::log1p(x); };
  throw ConfigError("params.f: unknown function \"" + name +
                    "\" (identity, square, cube, sqrt, exp, log1p)");
}

namespace detail {

inline int default_jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

inline void require_range(double x, const std::string& what) {
  require(x >= kMinTolerance && x <= kMaxTolerance,
          what + ": tolerance " + sci(x) + " outside [1e-12, 1e-4]");
}

inline FitWindow window_field(Fields& f) {
  const std::string w = f.text("fit_window", "largest_decade");
  if (w != "all" && w != "largest_decade") {
    throw ConfigError(f.path("fit_window") + ": expected \"all\" or \"largest_decade\"");
  }
  return fit_window_from_string(w);
}

inline void require_kind(const ExperimentConfig& c, const std::string& kind) {
  require(c.model.kind == kind, c.experiment + " needs a " + kind + " model, got " + c.model.kind);
}

/// Experiments with a built-in traversal accept only the default schedule.
inline void require_builtin_schedule(const ExperimentConfig& c) {
  if (!c.has_schedule) return;
  require(c.schedule.kind == "natural" && c.schedule.slowdown == 1.0 && !c.schedule.length &&
              c.schedule.nodes == 256,
          "schedule: " + c.experiment + " fixes its own traversal; only {\"kind\": \"natural\"} "
          "is accepted");
}

/// Default schedule length when the config leaves it out.
inline double default_length(const ModelSpec& m) {
  if (m.kind == "rotating_two_level") return m.parameter == "native" ? 1.0 : kRotatingCycleLength;
  if (m.kind == "sampled") return m.grid.back();
  if (m.kind == "constant" && m.domain) return m.domain->second;
  throw ConfigError("schedule.length: required for a " + m.kind + " model");
}

inline ExperimentParams parse_params(ExperimentConfig& c, const Json& j) {
  Fields f(j, "params");
  const std::string& e = c.experiment;
  ExperimentParams out;
  if (e == "path_length") {
    require(!c.has_schedule, "schedule: path_length takes no schedule");
    PathLengthParams p;
    const Domain d = model_domain(c.model);
    p.s_start = f.number("s_start", d.lo);
    p.s_end = f.number("s_end", d.bounded() ? d.hi : p.s_start + 1.0);
    p.samples = f.integer("samples", 1);
    require(p.s_end > p.s_start, "params: need s_end > s_start");
    require(p.samples >= 1, "params.samples: must be positive");
    out = p;
  } else if (e == "counterexample_scaling") {
    require_kind(c, "three_level");
    require_builtin_schedule(c);
    CounterexampleParams p;
    p.lengths = f.numbers("lengths", p.lengths);
    require_positive(p.lengths, "params.lengths");
    p.sample_step = f.number("sample_step", p.sample_step);
    p.max_phase_step = f.number("max_phase_step", p.max_phase_step);
    p.plateau_tolerance = f.number("plateau_tolerance", p.plateau_tolerance);
    p.window = window_field(f);
    require(p.sample_step > 0.0, "params.sample_step: must be positive");
    require(p.max_phase_step > 0.0 && p.max_phase_step <= 0.1,
            "params.max_phase_step: must lie in (0, 0.1]");
    require(p.plateau_tolerance > 0.0 && p.plateau_tolerance < 1.0,
            "params.plateau_tolerance: must lie in (0, 1)");
    out = p;
  } else if (e == "periodic_scaling") {
    require_kind(c, "rotating_two_level");
    require_builtin_schedule(c);
    PeriodicParams p;
    p.mode = f.text("mode", p.mode);
    p.cycles = f.integers("cycles", p.cycles);
    require(!p.cycles.empty(), "params.cycles: must not be empty");
    for (int n : p.cycles) require(n >= 1, "params.cycles: must be positive");
    if (p.mode == "fixed_slowdown") {
      p.slowdown = f.number("slowdown");
      require(p.slowdown > 0.0, "params.slowdown: must be positive");
    } else if (p.mode == "match") {
      p.eps_target = f.number("eps_target", p.eps_target);
      p.initial_slowdown = f.number("initial_slowdown", p.initial_slowdown);
      p.match_tolerance = f.number("match_tolerance", p.match_tolerance);
      p.max_iterations = f.integer("max_iterations", p.max_iterations);
      p.guard_threshold = f.number("guard_threshold", p.guard_threshold);
      p.superlinear_margin = f.number("superlinear_margin", p.superlinear_margin);
      p.max_residual = f.number("max_residual", p.max_residual);
      p.window = window_field(f);
      require(p.eps_target > 0.0 && p.eps_target < 1.0, "params.eps_target: must lie in (0, 1)");
      require(p.initial_slowdown > 0.0, "params.initial_slowdown: must be positive");
      require(p.match_tolerance > 0.0 && p.match_tolerance < 1.0,
              "params.match_tolerance: must lie in (0, 1)");
      require(p.max_iterations >= 1, "params.max_iterations: must be positive");
    } else {
      throw ConfigError("params.mode: expected \"match\" or \"fixed_slowdown\"");
    }
    out = p;
  } else if (e == "nogo_demo") {
    require(!c.schedule.length, "schedule.length: nogo_demo takes its lengths from params");
    NogoParams p;
    if (f.has("factor")) p.factor = parse_factor(f.raw("factor"), "params.factor");
    p.lengths = f.numbers("lengths", p.lengths);
    require_positive(p.lengths, "params.lengths");
    p.integrate = f.flag("integrate", p.integrate);
    if (f.has("pin")) {
      p.pin = f.number("pin");
      require(*p.pin > 0.0, "params.pin: must be positive");
    }
    p.gap_samples = f.integer("gap_samples", p.gap_samples);
    p.state_samples = f.integer("state_samples", p.state_samples);
    p.window = window_field(f);
    require(p.gap_samples >= 2, "params.gap_samples: need at least 2");
    require(p.state_samples >= 1, "params.state_samples: must be positive");
    out = p;
  } else if (e == "qd_sweep" || e == "b1") {
    require(c.schedule.slowdown == 1.0,
            "schedule.slowdown: " + e + " takes its slowdowns from params");
    if (!c.schedule.length) c.schedule.length = default_length(c.model);
    if (e == "qd_sweep") {
      QdSweepParams p;
      p.slowdowns = f.numbers("slowdowns", p.slowdowns);
      p.f = f.text("f", p.f);
      named_function(p.f);
      p.integrate = f.flag("integrate", p.integrate);
      p.gap_samples = f.integer("gap_samples", p.gap_samples);
      require(p.gap_samples >= 2, "params.gap_samples: need at least 2");
      require_positive(p.slowdowns, "params.slowdowns");
      out = p;
    } else {
      B1Params p;
      p.slowdowns = f.numbers("slowdowns", p.slowdowns);
      p.frame_points = f.integer("frame_points", p.frame_points);
      p.integrate = f.flag("integrate", p.integrate);
      require_positive(p.slowdowns, "params.slowdowns");
      require(p.frame_points >= 2, "params.frame_points: need at least 2");
      out = p;
    }
  } else {
    throw ConfigError("experiment: unknown kind \"" + e +
                      "\" (counterexample_scaling, periodic_scaling, nogo_demo, qd_sweep, "
                      "path_length, b1)");
  }
  f.finish();
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const Json& j, const std::filesystem::path& base_dir = ".") {
  Fields f(j, "config");
  ExperimentConfig c;
  c.base_dir = base_dir;
  c.experiment = f.text("experiment");
  c.model = parse_model(f.raw("model"), base_dir);
  if (f.has("schedule")) {
    c.schedule = parse_schedule(f.raw("schedule"));
    c.has_schedule = true;
  }
  if (f.has("tolerances")) {
    Fields t(f.raw("tolerances"), "tolerances");
    c.tolerances.quadrature = t.number("quadrature", c.tolerances.quadrature);
    c.tolerances.integrator = t.number("integrator", c.tolerances.integrator);
    t.finish();
    detail::require_range(c.tolerances.quadrature, "tolerances.quadrature");
    detail::require_range(c.tolerances.integrator, "tolerances.integrator");
  }
  c.output_dir = f.text("output_dir", "results/" + c.experiment);
  c.jobs = f.integer("jobs", detail::default_jobs());
  detail::require(c.jobs >= 1, "jobs: must be positive");
  const Json empty = Json::object();
  const Json& params = f.has("params") ? f.raw("params") : empty;
  f.finish();
  const bool uses_schedule = c.experiment == "nogo_demo" || c.experiment == "qd_sweep" ||
                             c.experiment == "b1";
  c.params = detail::parse_params(c, params);
  if (uses_schedule) c.has_schedule = true;
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open " + file.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ConfigError("malformed JSON in " + file.string() + ": " + e.what());
  }
  return parse_config(j, file.parent_path().empty() ? "." : file.parent_path());
}

// ---------------------------------------------------------------------------
// validation

/// Parameter range the experiment will evaluate the model on.
inline std::pair<double, double> probe_range(const ExperimentConfig& c) {
  return std::visit(
      [&](const auto& p) -> std::pair<double, double> {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, PathLengthParams>) {
          return {p.s_start, p.s_end};
        } else if constexpr (std::is_same_v<P, CounterexampleParams>) {
          return {0.0, *std::max_element(p.lengths.begin(), p.lengths.end())};
        } else if constexpr (std::is_same_v<P, PeriodicParams>) {
          return {0.0, kRotatingCycleLength};
        } else if constexpr (std::is_same_v<P, NogoParams>) {
          return {0.0, *std::max_element(p.lengths.begin(), p.lengths.end())};
        } else {
          return {0.0, c.length()};
        }
      },
      c.params);
}

/// Semantic checks that need no integration. An empty list means runnable.
inline std::vector<std::string> validate(const ExperimentConfig& c) {
  std::vector<std::string> out;
  for (const std::string& part : zero_gap_parts(c.model)) {
    out.push_back("degenerate spectrum: " + part + " has delta = 0, so its levels coincide");
  }
  if (!out.empty()) return out;
  const auto [lo, hi] = probe_range(c);
  try {
    const HamiltonianPath path = build_path(c.model);
    for (double x : uniform_grid(lo, hi, 15)) eigensystem(path.eval(x));
  } catch (const Error& e) {
    out.push_back(e.what());
    return out;
  }
  if (c.has_schedule) {
    try {
      build_schedule(c.schedule, c.model, hi, {});
    } catch (const Error& e) {
      out.push_back(std::string("schedule: ") + e.what());
    }
  }
  if (const auto* p = std::get_if<NogoParams>(&c.params)) {
    try {
      const RateFactor factor = p->factor.build();
      if (p->pin) {
        const double bad = first_decrease(factor, hi);
        if (bad >= 0.0) {
          out.push_back("pin_gap: monotonicity precondition violated; the rate factor decreases "
                        "near lambda = " + sci(bad));
        }
      }
      for (double x : uniform_grid(0.0, hi, 64)) {
        if (!(factor(x) > 0.0)) {
          out.push_back("params.factor: must stay positive; factor(" + sci(x) + ") = " +
                        sci(factor(x)));
          break;
        }
      }
    } catch (const Error& e) {
      out.push_back(e.what());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// drivers

struct RunResult {
  Table table;
  Json summary;
  std::optional<std::string> failure;  ///< numerical failure; rows are partial
};

namespace detail {

template <class Row>
struct FanOut {
  std::vector<std::optional<Row>> rows;
  std::optional<std::string> failure;

  std::vector<Row> done() const {
    std::vector<Row> out;
    for (const auto& r : rows) {
      if (r) out.push_back(*r);
    }
    return out;
  }
};

/// Runs fn(i) for i < n on up to `jobs` threads. Results keep index order.
/// Input errors propagate (lowest index first); numerical failures are
/// collected and the remaining rows are kept.
template <class Row>
FanOut<Row> fan_out(std::size_t n, int jobs, const std::function<Row(std::size_t)>& fn) {
  FanOut<Row> out;
  out.rows.resize(n);
  std::vector<std::exception_ptr> errors(n);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        out.rows[i] = fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t k = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < k; ++t) pool.emplace_back(worker);
  for (std::thread& t : pool) t.join();
  for (std::size_t i = 0; i < n; ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const NumericalFailure& e) {
      const std::string msg = "row " + std::to_string(i) + ": " + e.what();
      out.failure = out.failure ? *out.failure + "; " + msg : msg;
    }
  }
  return out;
}

inline Json fit_json(const ScalingFit& f) {
  if (f.xs.empty()) return nullptr;
  return {{"exponent", f.exponent},
          {"residual_rms", f.residual_rms},
          {"window", to_string(f.window)},
          {"intercept", f.intercept},
          {"points", f.points()},
          {"x_range", {f.xs[f.first], f.xs[f.last]}},
          {"sensitivity", f.sensitivity}};
}

inline StepControl step_control(const Tolerances& t) {
  StepControl c;
  c.tolerance = t.integrator;
  return c;
}

inline QuadratureOptions quadrature(const Tolerances& t) {
  QuadratureOptions q;
  q.rel_tol = t.quadrature;
  return q;
}

inline Json base_summary(const ExperimentConfig& c) {
  Json s;
  s["experiment"] = c.experiment;
  s["params"] = std::visit([](const auto& p) { return p.to_json(); }, c.params);
  return s;
}

inline RunResult run_path_length(const ExperimentConfig& c, const PathLengthParams& p) {
  const HamiltonianPath path = build_path(c.model);
  const QuadratureOptions q = quadrature(c.tolerances);
  const auto n = static_cast<std::size_t>(p.samples);
  auto s_of = [&](std::size_t k) {
    return p.s_start + (p.s_end - p.s_start) * static_cast<double>(k + 1) / static_cast<double>(n);
  };
  const FanOut<std::vector<double>> rows =
      fan_out<std::vector<double>>(n, c.jobs, [&](std::size_t k) {
        const double s = s_of(k);
        return std::vector<double>{s, path_length(path, p.s_start, s, q)};
      });
  RunResult r;
  r.failure = rows.failure;
  r.table.header = {"s", "length"};
  r.table.rows = rows.done();
  r.summary = base_summary(c);
  if (!r.table.rows.empty()) r.summary["total_length"] = r.table.rows.back()[1];
  if (c.model.kind == "three_level" && c.model.parameter == "native") {
    double worst = 0.0;
    for (const auto& row : r.table.rows) {
      const double s0 = p.s_start;
      const double s = row[0];
      const double exact = (s + 0.5 * s * s) - (s0 + 0.5 * s0 * s0);
      worst = std::max(worst, std::abs(row[1] - exact) / exact);
    }
    r.summary["max_relative_error_vs_closed_form"] = worst;
  }
  r.summary["verdict"] = "computed";
  return r;
}

inline RunResult run_counterexample(const ExperimentConfig& c, const CounterexampleParams& p) {
  CounterexampleOptions opt;
  opt.control.tolerance = c.tolerances.integrator;
  opt.control.max_phase_step = p.max_phase_step;
  opt.sample_step = p.sample_step;
  opt.plateau_tolerance = p.plateau_tolerance;
  opt.window = p.window;
  RunResult r;
  r.table.header = {"target_length", "length", "time", "analytic_time", "epsilon", "running_max"};
  r.summary = base_summary(c);
  CounterexampleReport rep;
  try {
    rep = counterexample_scaling_experiment({c.model.delta, c.model.tau}, p.lengths, opt);
  } catch (const NumericalFailure& e) {
    r.failure = e.what();
    return r;
  }
  for (const CounterexampleRow& row : rep.rows) {
    r.table.rows.push_back(
        {row.target, row.length, row.time, row.analytic, row.epsilon, row.running_max});
  }
  r.summary["fit"] = fit_json(rep.fit);
  r.summary["eps_max_theory"] = rep.eps_max_theory;
  r.summary["max_overlay_deviation"] = rep.max_overlay_deviation;
  r.summary["unitarity_defect"] = rep.unitarity_defect;
  r.summary["steps"] = rep.steps;
  if (rep.fit.xs.empty()) {
    r.summary["verdict"] = "too few lengths to fit";
  } else {
    r.summary["sqrt_window"] = {0.45, 0.55};
    r.summary["in_sqrt_window"] = rep.fit.exponent >= 0.45 && rep.fit.exponent <= 0.55;
    r.summary["verdict"] = rep.fit.exponent < 1.0 ? "slower than linear" : "not slower than linear";
  }
  return r;
}

inline RunResult run_periodic(const ExperimentConfig& c, const PeriodicParams& p) {
  const RotatingTwoLevelParams model{c.model.delta, c.model.tau};
  RunResult r;
  r.summary = base_summary(c);
  StepControl control = step_control(c.tolerances);
  if (p.mode == "fixed_slowdown") {
    r.table.header = {"cycles", "epsilon", "linear", "deviation"};
    AccumulationReport rep;
    try {
      rep = periodic_accumulation(model, p.slowdown, p.cycles, control);
    } catch (const NumericalFailure& e) {
      r.failure = e.what();
      return r;
    }
    for (const AccumulationRow& row : rep.rows) {
      r.table.rows.push_back({static_cast<double>(row.cycles), row.epsilon, row.linear,
                              row.deviation});
    }
    r.summary["single_cycle"] = rep.single_cycle;
    r.summary["oracle"] = rep.oracle;
    r.summary["max_deviation"] = rep.max_deviation();
    r.summary["verdict"] = rep.max_deviation() <= 0.05 ? "linear accumulation" : "not linear";
    return r;
  }
  PeriodicOptions opt;
  opt.control = control;
  opt.initial_slowdown = p.initial_slowdown;
  opt.match_tolerance = p.match_tolerance;
  opt.max_iterations = p.max_iterations;
  opt.guard_threshold = p.guard_threshold;
  opt.window = p.window;
  opt.superlinear_margin = p.superlinear_margin;
  opt.max_residual = p.max_residual;
  const FanOut<PeriodicScalingRow> rows =
      fan_out<PeriodicScalingRow>(p.cycles.size(), c.jobs, [&](std::size_t i) {
        return periodic_scaling_experiment(model, p.eps_target, {p.cycles[i]}, opt).rows.at(0);
      });
  r.failure = rows.failure;
  r.table.header = {"cycles", "length", "slowdown", "epsilon", "transit_time",
                    "qd_mean", "qd_rms", "qd_sqrt", "evaluations"};
  std::vector<double> ls, ts;
  for (const PeriodicScalingRow& row : rows.done()) {
    r.table.rows.push_back({static_cast<double>(row.cycles), row.length, row.slowdown,
                            row.epsilon, row.transit_time, row.qd[0], row.qd[1], row.qd[2],
                            static_cast<double>(row.evaluations)});
    ls.push_back(row.length);
    ts.push_back(row.transit_time);
  }
  if (!r.failure && ls.size() >= 4) {
    const ScalingFit fit = fit_power_law(ls, ts, p.window);
    const bool superlinear =
        fit.exponent > 1.0 + p.superlinear_margin && fit.residual_rms < p.max_residual;
    r.summary["fit"] = fit_json(fit);
    r.summary["superlinear"] = superlinear;
    r.summary["verdict"] = superlinear ? "superlinear" : "not superlinear";
  } else {
    r.summary["fit"] = nullptr;
    r.summary["verdict"] = r.failure ? "failed" : "too few rows to fit";
  }
  return r;
}

struct NogoRow {
  std::vector<double> values;
  double deviation = 0.0;
  double unitarity = 0.0;
};

inline RunResult run_nogo(const ExperimentConfig& c, const NogoParams& p) {
  const HamiltonianPath path = build_path(c.model);
  const QuadratureOptions q = quadrature(c.tolerances);
  const StepControl control = step_control(c.tolerances);
  const FanOut<NogoRow> rows = fan_out<NogoRow>(p.lengths.size(), c.jobs, [&](std::size_t i) {
    const double length = p.lengths[i];
    const System base{path, build_schedule(c.schedule, c.model, length, q)};
    const RescaledSystem rs = rescale(base, p.factor.build());
    NogoRow row;
    const double ta = base.schedule.transit_time();
    const double tb = rs.derived.schedule.transit_time();
    row.values = {length, ta, tb, tb / ta, 1.0 / rs.factor(length)};
    if (p.integrate) {
      const StateVector g0 = eigensystem(base.path.eval(0.0)).ground();
      const EquivalenceReport eq =
          verify_equivalence(base, rs.derived,
                             uniform_grid(0.0, length, static_cast<std::size_t>(p.state_samples)),
                             g0, control);
      row.values.insert(row.values.end(), {eq.epsilon_a, eq.epsilon_b, eq.max_deviation});
      row.deviation = eq.max_deviation;
      row.unitarity = eq.unitarity_defect;
    }
    row.values.push_back(
        spectral_gap(rs.derived.path,
                     uniform_grid(0.0, length, static_cast<std::size_t>(p.gap_samples)))
            .min_gap);
    if (p.pin) {
      const PinnedSystem pinned = pin_gap(rs, *p.pin, static_cast<std::size_t>(p.gap_samples));
      row.values.push_back(pinned.profile.min_gap);
      double leak = 0.0;
      if (p.integrate) {
        StepControl lc = control;
        lc.form = Formulation::lambda;
        const TrajectoryResult tr = integrate(
            pinned.system, eigensystem(pinned.system.path.eval(0.0)).ground(), lc,
            uniform_grid(0.0, length, static_cast<std::size_t>(p.state_samples)));
        for (const StateVector& psi : tr.states) {
          leak = std::max(leak, block_leakage(psi, pinned.physical_dim));
        }
        row.unitarity = std::max(row.unitarity, tr.unitarity_defect);
      }
      row.values.push_back(leak);
    }
    return row;
  });
  RunResult r;
  r.failure = rows.failure;
  r.table.header = {"length", "transit_a", "transit_b", "ratio", "local_ratio"};
  if (p.integrate) {
    for (const char* h : {"epsilon_a", "epsilon_b", "max_deviation"}) r.table.header.push_back(h);
  }
  r.table.header.push_back("min_gap");
  if (p.pin) {
    r.table.header.push_back("pinned_min_gap");
    r.table.header.push_back("leakage");
  }
  std::vector<double> ls, ratio, local;
  double worst_dev = 0.0, worst_eps = 0.0, unitarity = 0.0;
  for (const NogoRow& row : rows.done()) {
    r.table.rows.push_back(row.values);
    ls.push_back(row.values[0]);
    ratio.push_back(row.values[3]);
    local.push_back(row.values[4]);
    worst_dev = std::max(worst_dev, row.deviation);
    if (p.integrate) worst_eps = std::max(worst_eps, std::abs(row.values[5] - row.values[6]));
    unitarity = std::max(unitarity, row.unitarity);
  }
  r.summary = base_summary(c);
  const bool fit = !r.failure && ls.size() >= 4;
  r.summary["fit"] = fit ? fit_json(fit_power_law(ls, ratio, p.window)) : Json(nullptr);
  r.summary["local_ratio_fit"] = fit ? fit_json(fit_power_law(ls, local, p.window)) : Json(nullptr);
  if (p.integrate) {
    r.summary["max_state_deviation"] = worst_dev;
    r.summary["max_epsilon_difference"] = worst_eps;
    r.summary["unitarity_defect"] = unitarity;
    r.summary["verdict"] = worst_dev <= 1e-6 && worst_eps <= 1e-6 ? "equivalent computations"
                                                                 : "equivalence not confirmed";
  } else {
    r.summary["verdict"] = "transit times only";
  }
  return r;
}

inline RunResult run_qd_sweep(const ExperimentConfig& c, const QdSweepParams& p) {
  const HamiltonianPath path = build_path(c.model);
  const double length = c.length();
  QdOptions opt;
  opt.quadrature = quadrature(c.tolerances);
  opt.gap_samples = static_cast<std::size_t>(p.gap_samples);
  const auto f = named_function(p.f);
  const StepControl control = step_control(c.tolerances);
  const FanOut<std::vector<double>> rows =
      fan_out<std::vector<double>>(p.slowdowns.size(), c.jobs, [&](std::size_t i) {
        ScheduleSpec spec = c.schedule;
        spec.slowdown = p.slowdowns[i];
        const System sys{path, build_schedule(spec, c.model, length, opt.quadrature)};
        const QdReport mean = qd(sys.path, sys.schedule, QdVariant::mean, {}, opt);
        std::vector<double> row{p.slowdowns[i], sys.schedule.transit_time(), mean.value};
        for (QdVariant v : {QdVariant::rms, QdVariant::sqrt, QdVariant::generic_f}) {
          row.push_back(qd(sys.path, sys.schedule, v, f, opt).value);
        }
        row.insert(row.end(), {mean.gap_integral, mean.min_gap, mean.delta_T_bound,
                               mean.satisfies_bound() ? 1.0 : 0.0});
        if (p.integrate) {
          const TrajectoryResult tr =
              integrate(sys, eigensystem(sys.path.eval(0.0)).ground(), control);
          row.push_back(tr.epsilon);
          row.push_back(tr.unitarity_defect);
        }
        return row;
      });
  RunResult r;
  r.failure = rows.failure;
  r.table.header = {"slowdown", "transit_time", "qd_mean", "qd_rms", "qd_sqrt", "qd_generic_f",
                    "gap_integral", "min_gap", "delta_t_bound", "bound_satisfied"};
  if (p.integrate) {
    r.table.header.push_back("epsilon");
    r.table.header.push_back("unitarity_defect");
  }
  r.table.rows = rows.done();
  r.summary = base_summary(c);
  bool bound = true;
  std::vector<double> qs, es;
  for (const auto& row : r.table.rows) {
    bound = bound && row[9] == 1.0;
    if (p.integrate) {
      qs.push_back(row[2]);
      es.push_back(row[10]);
    }
  }
  r.summary["bound_satisfied"] = bound;
  if (p.integrate) {
    const MonotonicityReport m = condition4_report(qs, es);
    r.summary["condition4"] = {{"monotone", m.monotone},
                               {"checked_pairs", m.checked_pairs},
                               {"violations", m.violations}};
  }
  r.summary["verdict"] = bound ? "bound holds" : "bound violated";
  return r;
}

inline RunResult run_b1(const ExperimentConfig& c, const B1Params& p) {
  const HamiltonianPath path = build_path(c.model);
  const double length = c.length();
  const QuadratureOptions q = quadrature(c.tolerances);
  const StepControl control = step_control(c.tolerances);
  const GaugedFrame frame =
      transport_frame(path, uniform_grid(0.0, length, static_cast<std::size_t>(p.frame_points) - 1));
  const StateVector g0 = frame.states.front().ground();
  const FanOut<std::vector<double>> rows =
      fan_out<std::vector<double>>(p.slowdowns.size(), c.jobs, [&](std::size_t i) {
        ScheduleSpec spec = c.schedule;
        spec.slowdown = p.slowdowns[i];
        const System sys{path, build_schedule(spec, c.model, length, q)};
        const B1Report b = b1_coefficient(frame, sys.schedule, q);
        std::vector<double> row{p.slowdowns[i], b.transit_time, b.value, b.endpoint_difference,
                                b.endpoint_error()};
        if (p.integrate) {
          const TrajectoryResult tr = integrate(sys, g0, control);
          row.push_back(tr.epsilon);
          row.push_back(std::abs(tr.epsilon - b.endpoint_error()) * b.transit_time *
                        b.transit_time);
        }
        return row;
      });
  RunResult r;
  r.failure = rows.failure;
  r.table.header = {"slowdown", "transit_time", "b1", "endpoint_difference", "endpoint_error"};
  if (p.integrate) {
    r.table.header.push_back("epsilon");
    r.table.header.push_back("residual_t2");
  }
  r.table.rows = rows.done();
  r.summary = base_summary(c);
  r.summary["gauge_defect"] = frame.gauge_defect();
  r.summary["verdict"] = "computed";
  return r;
}

}  // namespace detail

/// Runs the experiment in memory. Input errors throw; numerical failures are
/// returned with whatever rows completed.
inline RunResult run_experiment(const ExperimentConfig& c) {
  RunResult r = std::visit(
      [&](const auto& p) -> RunResult {
        using P = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<P, PathLengthParams>) return detail::run_path_length(c, p);
        else if constexpr (std::is_same_v<P, CounterexampleParams>) return detail::run_counterexample(c, p);
        else if constexpr (std::is_same_v<P, PeriodicParams>) return detail::run_periodic(c, p);
        else if constexpr (std::is_same_v<P, NogoParams>) return detail::run_nogo(c, p);
        else if constexpr (std::is_same_v<P, QdSweepParams>) return detail::run_qd_sweep(c, p);
        else return detail::run_b1(c, p);
      },
      c.params);
  r.summary["status"] = r.failure ? "numerical_failure" : "ok";
  if (r.failure) r.summary["error"] = *r.failure;
  return r;
}

inline Json manifest(const ExperimentConfig& c, const RunResult& r) {
  const StepControl sc = detail::step_control(c.tolerances);
  const QuadratureOptions q = detail::quadrature(c.tolerances);
  const FrameOptions fo;
  Json m;
  m["version"] = kVersion;
  m["experiment"] = c.experiment;
  m["status"] = r.failure ? "numerical_failure" : "ok";
  m["config"] = c.to_json();
  m["tolerances"] = {
      {"quadrature_rel", q.rel_tol},
      {"quadrature_abs", q.abs_tol},
      {"quadrature_max_depth", q.max_depth},
      {"integrator", sc.tolerance},
      {"integrator_max_halvings", sc.max_halvings},
      {"integrator_max_phase_step", sc.max_phase_step},
      {"integrator_max_lambda_step", sc.max_lambda_step},
      {"frame_min_overlap", fo.min_overlap},
      {"frame_max_refinement_depth", fo.max_refinement_depth},
      {"hermiticity", 1e-12},
      {"pin_ground_energy", 1e-10},
  };
  m["columns"] = r.table.header;
  m["rows"] = r.table.rows.size();
  return m;
}

/// Writes results.csv, summary.json and manifest.json into `dir`.
inline void write_artifacts(const std::filesystem::path& dir, const ExperimentConfig& c,
                            const RunResult& r) {
  std::filesystem::create_directories(dir);
  std::ostringstream csv;
  write_csv(csv, r.table);
  write_text(dir / "results.csv", csv.str());
  write_text(dir / "summary.json", r.summary.dump(2) + "\n");
  write_text(dir / "manifest.json", manifest(c, r).dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// command entry points

inline int validate_command(const std::filesystem::path& file, std::ostream& out) {
  std::vector<std::string> diags;
  try {
    diags = validate(load_config(file));
  } catch (const Error& e) {
    diags.push_back(e.what());
  }
  for (const std::string& d : diags) out << d << '\n';
  if (diags.empty()) out << "ok\n";
  return diags.empty() ? exit_code::ok : exit_code::config_error;
}

inline int run_command(const std::filesystem::path& file, const std::optional<std::string>& out_dir,
                       const std::optional<int>& jobs, std::ostream& log, std::ostream& err) {
  ExperimentConfig c;
  try {
    c = load_config(file);
    if (out_dir) c.output_dir = *out_dir;
    if (jobs) {
      if (*jobs < 1) throw ConfigError("--jobs: must be positive");
      c.jobs = *jobs;
    }
    const std::vector<std::string> diags = validate(c);
    if (!diags.empty()) {
      for (const std::string& d : diags) err << "config error: " << d << '\n';
      return exit_code::config_error;
    }
  } catch (const Error& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  }
  RunResult r;
  try {
    r = run_experiment(c);
  } catch (const NumericalFailure& e) {
    r.failure = e.what();
    r.summary = detail::base_summary(c);
    r.summary["status"] = "numerical_failure";
    r.summary["error"] = e.what();
  } catch (const InvalidArgument& e) {
    err << "config error: " << e.what() << '\n';
    return exit_code::config_error;
  }
  try {
    write_artifacts(c.output_dir, c, r);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code::config_error;
  }
  if (r.failure) {
    err << "numerical failure: " << *r.failure << '\n';
    log << "partial artifacts written to " << c.output_dir << '\n';
    return exit_code::numerical_failure;
  }
  log << c.experiment << ": " << r.table.rows.size() << " rows written to " << c.output_dir
      << '\n';
  return exit_code::ok;
}

}  // namespace adiabatic
