#include "run_config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>

#include "tthjb/errors.hpp"

namespace tthjb::cli {

namespace {

namespace pt = boost::property_tree;

ConfigMap flatten(const pt::ptree& tree) {
    ConfigMap out;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("config: key '" + section + "' must be inside a [section]");
        for (const auto& [key, value] : body) out.set(section + "." + key + "=" + value.data());
    }
    return out;
}

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

template <typename T>
T convert(const std::string& key, const std::string& text) {
    if constexpr (std::is_same_v<T, std::string>) {
        return text;
    } else if constexpr (std::is_same_v<T, bool>) {
        if (text == "true" || text == "1" || text == "yes") return true;
        if (text == "false" || text == "0" || text == "no") return false;
        throw ConfigError("config: '" + key + "' must be a boolean, got '" + text + "'");
    } else {
        std::istringstream in(text);
        T v{};
        if (text == "inf" && std::numeric_limits<T>::has_infinity) return std::numeric_limits<T>::infinity();
        if (!(in >> v) || !(in >> std::ws).eof())
            throw ConfigError("config: '" + key + "' has invalid value '" + text + "'");
        return v;
    }
}

const std::set<std::string> kKnownKeys = {
    "problem.kind", "problem.dim", "problem.horizon", "problem.sigma", "problem.omega_lo", "problem.omega_hi",
    "problem.control_weight", "problem.terminal_weight", "problem.cost_weight", "problem.mesh",
    "problem.domain_a", "problem.domain_b",
    "solver.backend", "solver.tau", "solver.dt_ode", "solver.basis_size", "solver.ranks", "solver.samples",
    "solver.sample_multiplier", "solver.eta", "solver.lookahead_steps", "solver.seed", "solver.als_sweeps",
    "solver.als_rel_tol", "solver.terminal_sweeps", "solver.warm_start", "solver.abort_residual",
    "solver.ocp_step_size", "solver.ocp_max_iters", "solver.ocp_rel_tol", "solver.pi_tol", "solver.pi_max_iters",
    "solver.validation_points",
    "output.schedule", "output.report",
    "benchmark.samples", "benchmark.seed", "benchmark.schedules", "benchmark.optimal", "benchmark.table",
    "benchmark.sweep_max", "benchmark.sweep_points", "benchmark.sweep",
    "riccati.output", "riccati.dt"};

}  // namespace

ConfigMap ConfigMap::from_file(const std::string& path) {
    pt::ptree tree;
    try {
        pt::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
        if (e.line() == 0) throw IoError("cannot read config '" + path + "': " + e.message());
        throw ConfigError("config '" + path + "' line " + std::to_string(e.line()) + ": " + e.message());
    }
    return flatten(tree);
}

ConfigMap ConfigMap::from_string(const std::string& text) {
    pt::ptree tree;
    std::istringstream in(text);
    try {
        pt::read_ini(in, tree);
    } catch (const pt::ini_parser_error& e) {
        throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
    }
    return flatten(tree);
}

void ConfigMap::set(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not of the form section.key=value");
    const std::string key = trim(assignment.substr(0, eq));
    if (key.find('.') == std::string::npos) throw ConfigError("override key '" + key + "' needs a section prefix");
    values_[key] = trim(assignment.substr(eq + 1));
}

const std::string& ConfigMap::raw(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("config: missing required key '" + key + "'");
    return it->second;
}

template <typename T>
T ConfigMap::get(const std::string& key, const T& fallback) const {
    const auto it = values_.find(key);
    return it == values_.end() ? fallback : convert<T>(key, it->second);
}

template <typename T>
T ConfigMap::require(const std::string& key) const {
    return convert<T>(key, raw(key));
}

std::string ConfigMap::hash() const {
    std::uint64_t h = 14695981039346656037ull;
    for (const auto& [k, v] : values_) {
        for (const char c : k + "=" + v + "\n") {
            h ^= static_cast<unsigned char>(c);
            h *= 1099511628211ull;
        }
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::vector<Index> parse_ranks(const std::string& text, Index dim) {
    std::vector<Index> out;
    std::istringstream in(text);
    std::string item;
    while (std::getline(in, item, ',')) out.push_back(convert<Index>("solver.ranks", trim(item)));
    if (out.size() == 1 && dim > 2) out.assign(static_cast<std::size_t>(dim - 1), out.front());
    if (static_cast<Index>(out.size()) != dim - 1)
        throw ConfigError("config: 'solver.ranks' needs 1 or " + std::to_string(dim - 1) + " entries, got " +
                          std::to_string(out.size()));
    for (const Index r : out)
        if (r < 1) throw ConfigError("config: 'solver.ranks' entries must be positive");
    return out;
}

ControlProblem RunConfig::problem() const { return make_benchmark(kind, dim, params); }

Index RunConfig::sample_count() const {
    if (samples > 0) return samples;
    const double base = static_cast<double>(default_sample_count(dim, solver.basis_size, solver.ranks)) / 6.0;
    return static_cast<Index>(std::ceil(sample_multiplier * base));
}

RunConfig load_run_config(const ConfigMap& map) {
    for (const auto& [key, value] : map.values())
        if (!kKnownKeys.count(key)) throw ConfigError("config: unknown key '" + key + "'");

    RunConfig c;
    try {
        c.kind = parse_pde_kind(map.require<std::string>("problem.kind"));
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("config: 'problem.kind': ") + e.what());
    }
    c.dim = map.require<Index>("problem.dim");
    if (c.dim < 2) throw ConfigError("config: 'problem.dim' must be at least 2");
    auto& p = c.params;
    p.horizon = map.get<double>("problem.horizon", p.horizon);
    if (map.has("problem.sigma")) p.sigma = map.require<double>("problem.sigma");
    if (map.has("problem.omega_lo")) p.omega_lo = map.require<double>("problem.omega_lo");
    if (map.has("problem.omega_hi")) p.omega_hi = map.require<double>("problem.omega_hi");
    if (map.has("problem.cost_weight")) p.cost_weight = map.require<double>("problem.cost_weight");
    if (map.has("problem.mesh")) p.mesh = map.require<double>("problem.mesh");
    p.control_weight = map.get<double>("problem.control_weight", p.control_weight);
    p.terminal_weight = map.get<double>("problem.terminal_weight", p.terminal_weight);
    p.domain_a = map.get<double>("problem.domain_a", p.domain_a);
    p.domain_b = map.get<double>("problem.domain_b", p.domain_b);

    auto& s = c.solver;
    try {
        s.backend = parse_backend(map.get<std::string>("solver.backend", "open-loop"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: 'solver.backend': ") + e.what());
    }
    s.tau = map.get<double>("solver.tau", s.tau);
    s.dt_ode = map.get<double>("solver.dt_ode", s.dt_ode);
    s.basis_size = map.get<Index>("solver.basis_size", s.basis_size);
    s.ranks = parse_ranks(map.raw("solver.ranks"), c.dim);
    c.samples = map.get<Index>("solver.samples", 0);
    c.sample_multiplier = map.get<double>("solver.sample_multiplier", c.sample_multiplier);
    if (c.samples < 0 || !(c.sample_multiplier > 0.0))
        throw ConfigError("config: 'solver.samples' and 'solver.sample_multiplier' must be positive");
    s.eta = map.get<double>("solver.eta", s.eta);
    s.lookahead_steps = map.get<int>("solver.lookahead_steps", s.lookahead_steps);
    s.seed = map.get<std::uint64_t>("solver.seed", s.seed);
    s.als_sweeps = map.get<int>("solver.als_sweeps", s.als_sweeps);
    s.als_rel_tol = map.get<double>("solver.als_rel_tol", s.als_rel_tol);
    s.terminal_sweeps = map.get<int>("solver.terminal_sweeps", s.terminal_sweeps);
    s.warm_start = map.get<bool>("solver.warm_start", s.warm_start);
    s.abort_residual = map.get<double>("solver.abort_residual", s.abort_residual);
    s.ocp.dt = s.dt_ode;
    s.ocp.step_size = map.get<double>("solver.ocp_step_size", s.ocp.step_size);
    s.ocp.max_iters = map.get<int>("solver.ocp_max_iters", s.ocp.max_iters);
    s.ocp.rel_decrease_tol = map.get<double>("solver.ocp_rel_tol", s.ocp.rel_decrease_tol);
    s.pi_tol = map.get<double>("solver.pi_tol", s.pi_tol);
    s.pi_max_iters = map.get<int>("solver.pi_max_iters", s.pi_max_iters);
    c.validation_points = map.get<Index>("solver.validation_points", 0);

    c.schedule_path = map.get<std::string>("output.schedule", c.schedule_path);
    c.report_path = map.get<std::string>("output.report", c.report_path);

    c.benchmark_samples = map.get<Index>("benchmark.samples", c.benchmark_samples);
    c.benchmark_seed = map.get<std::uint64_t>("benchmark.seed", c.benchmark_seed);
    {
        std::istringstream in(map.get<std::string>("benchmark.schedules", c.schedule_path));
        std::string item;
        while (std::getline(in, item, ','))
            if (!trim(item).empty()) c.schedules.push_back(trim(item));
    }
    c.include_optimal = map.get<bool>("benchmark.optimal", false);
    c.table_path = map.get<std::string>("benchmark.table", c.table_path);
    c.sweep_max = map.get<double>("benchmark.sweep_max", c.sweep_max);
    c.sweep_points = map.get<Index>("benchmark.sweep_points", c.sweep_points);
    c.sweep_path = map.get<std::string>("benchmark.sweep", c.sweep_path);
    if (c.benchmark_samples < 1 || c.sweep_points < 2)
        throw ConfigError("config: 'benchmark.samples' must be >= 1 and 'benchmark.sweep_points' >= 2");

    c.riccati_path = map.get<std::string>("riccati.output", c.riccati_path);
    c.riccati_dt = map.get<double>("riccati.dt", c.riccati_dt);

    const auto problem = c.problem();
    try {
        s.validate(problem);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    c.hash = map.hash();
    return c;
}

template std::string ConfigMap::get<std::string>(const std::string&, const std::string&) const;
template double ConfigMap::get<double>(const std::string&, const double&) const;
template Index ConfigMap::get<Index>(const std::string&, const Index&) const;
template std::string ConfigMap::require<std::string>(const std::string&) const;
template double ConfigMap::require<double>(const std::string&) const;
template Index ConfigMap::require<Index>(const std::string&) const;

}  // namespace tthjb::cli
