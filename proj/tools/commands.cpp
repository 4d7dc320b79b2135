#include "commands.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>

#include "tthjb/als.hpp"
#include "tthjb/lqr.hpp"
#include "tthjb/ocp.hpp"

namespace tthjb::cli {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void ensure_parent(const std::string& path) {
    const auto parent = std::filesystem::path(path).parent_path();
    if (!parent.empty()) {
        std::error_code ec;
        std::filesystem::create_directories(parent, ec);
    }
}

std::ofstream open_output(const std::string& path) {
    ensure_parent(path);
    std::ofstream out(path);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

void finish(std::ofstream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError("failed writing '" + path + "'");
}

struct Controller {
    std::string name;
    Policy policy;
    std::function<double(const VectorXd&)> estimate;
};

std::vector<Controller> controllers(const RunConfig& config, const ControlProblem& problem,
                                    std::vector<ValueSchedule>& storage, const RiccatiSolution& riccati) {
    std::vector<Controller> out;
    out.push_back({"lqr", lqr_policy(riccati), [&riccati](const VectorXd& x) { return riccati.value(0.0, x); }});
    storage.clear();
    storage.reserve(config.schedules.size());
    for (const auto& path : config.schedules) {
        storage.push_back(load_schedule(path));
        const auto& s = storage.back();
        if (s.dim() != problem.state_dim)
            throw DimensionError("schedule '" + path + "' has dimension " + std::to_string(s.dim()) +
                                 ", problem has " + std::to_string(problem.state_dim));
        if (s.start_time != 0.0) throw DimensionError("schedule '" + path + "' does not start at t = 0");
        out.push_back({std::filesystem::path(path).stem().string(), schedule_policy(s, problem),
                       [&s](const VectorXd& x) { return s.value(0.0, x); }});
    }
    return out;
}

}  // namespace

std::string csv_header(const RunConfig& config) {
    return "# config_hash=" + config.hash + " seed=" + std::to_string(config.solver.seed) +
           " benchmark_seed=" + std::to_string(config.benchmark_seed) + "\n";
}

int cmd_solve(const RunConfig& config, std::ostream& log) {
    const auto problem = config.problem();
    const Index j = config.sample_count();
    const auto samples = SampleSet::uniform(j, config.dim, problem.omega_a, problem.omega_b, config.solver.seed);
    MatrixXd validation;
    if (config.validation_points > 0)
        validation = SampleSet::uniform(config.validation_points, config.dim, problem.omega_a, problem.omega_b,
                                        config.solver.seed + 1)
                         .points;
    log << "solve: " << to_string(config.kind) << " d=" << config.dim << " backend=" << to_string(config.solver.backend)
        << " J=" << j << "\n";
    const auto result = run_backward(problem, config.solver, samples,
                                     config.validation_points > 0 ? &validation : nullptr,
                                     [&log](const StepReport& s) {
                                         log << "  slice " << s.slice << " residual " << s.empirical_residual
                                             << " max error " << s.max_train_error << "\n";
                                     });
    ensure_parent(config.schedule_path);
    save_schedule(config.schedule_path, result.schedule);

    auto out = open_output(config.report_path);
    out << csv_header(config);
    out << "slice,time,empirical_residual,max_train_error,validation_error,final_delta,sweeps,failed_samples,"
           "pi_iterations,pi_converged\n";
    for (const auto& s : result.report.steps)
        out << s.slice << ',' << num(s.time) << ',' << num(s.empirical_residual) << ',' << num(s.max_train_error) << ','
            << num(s.validation_error) << ',' << num(s.final_delta) << ',' << s.sweeps << ',' << s.failed_samples
            << ',' << s.pi_iterations << ',' << (s.pi_converged ? 1 : 0) << '\n';
    finish(out, config.report_path);

    for (const auto& s : result.report.steps)
        for (const auto& w : s.warnings) log << "warning (slice " << s.slice << "): " << w << "\n";
    if (problem.linear) {
        const auto truth = solve_riccati(*problem.linear, problem.horizon, config.solver.dt_ode);
        const auto pts = SampleSet::uniform(200, config.dim, problem.omega_a, problem.omega_b, config.solver.seed + 2);
        double num_sq = 0, den_sq = 0;
        for (Index k = 0; k < pts.points.rows(); ++k) {
            const VectorXd x = pts.points.row(k).transpose();
            const double v = truth.value(result.schedule.start_time, x);
            const double e = result.schedule.value(result.schedule.start_time, x) - v;
            num_sq += e * e;
            den_sq += v * v;
        }
        log << "riccati cross-check: relative L2 error of the first slice " << std::sqrt(num_sq / den_sq) << "\n";
    }
    log << "wrote " << config.schedule_path << " and " << config.report_path << "\n";
    if (result.report.aborted) {
        log << "error: backward pass aborted: " << result.report.abort_reason << "\n";
        return kSolverFailure;
    }
    return kSuccess;
}

int cmd_benchmark(const RunConfig& config, std::ostream& log) {
    const auto problem = config.problem();
    const auto riccati = solve_riccati(linear_quadratic_model(problem), problem.horizon, config.solver.dt_ode);
    std::vector<ValueSchedule> storage;
    const auto ctrls = controllers(config, problem, storage, riccati);
    const Index n = config.benchmark_samples;
    const std::size_t nc = ctrls.size();

    MatrixXd cost(static_cast<Index>(nc), n), bellman(static_cast<Index>(nc), n);
    VectorXd optimal = VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
    for (Index k = 0; k < n; ++k) {
        const VectorXd x0 = sample_polynomial_initial(config.benchmark_seed + static_cast<std::uint64_t>(k), config.dim);
        for (std::size_t c = 0; c < nc; ++c) {
            const auto e = evaluate_controller(problem, ctrls[c].policy, x0, config.solver.dt_ode, ctrls[c].estimate);
            cost(static_cast<Index>(c), k) = e.cost;
            bellman(static_cast<Index>(c), k) = e.bellman_error;
        }
        if (config.include_optimal) {
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t c = 0; c < nc; ++c) {
                try {
                    const auto init = sample_feedback(problem, ctrls[c].policy, 0.0, problem.horizon, x0, config.solver.dt_ode);
                    best = std::min(best, solve_full_ocp(problem, x0, init, config.solver.ocp).value);
                } catch (const Error&) {
                }
            }
            optimal(k) = best;
        }
    }

    std::vector<Index> subset;
    for (Index k = 0; k < n; ++k)
        if (cost(0, k) < kCostFailure) subset.push_back(k);

    auto out = open_output(config.table_path);
    out << csv_header(config);
    out << "controller,pct_cost_below_100,avg_cost,max_rel_diff_to_opt,avg_bellman_error\n";
    auto row = [&](const std::string& name, const std::function<double(Index)>& value,
                   const std::function<double(Index)>& berr) {
        Index ok = 0;
        for (Index k = 0; k < n; ++k) ok += value(k) < kCostFailure ? 1 : 0;
        double sum = 0, bsum = 0, worst = config.include_optimal ? 0.0 : std::numeric_limits<double>::quiet_NaN();
        Index bcount = 0;
        for (const Index k : subset) {
            sum += value(k) < kCostFailure ? value(k) : kCostFailure;
            const double b = berr(k);
            if (std::isfinite(b)) {
                bsum += b;
                ++bcount;
            }
            if (config.include_optimal && std::isfinite(optimal(k)) && optimal(k) > 0)
                worst = std::max(worst, (value(k) - optimal(k)) / optimal(k));
        }
        const double avg = subset.empty() ? std::numeric_limits<double>::quiet_NaN() : sum / static_cast<double>(subset.size());
        const double bavg = bcount ? bsum / static_cast<double>(bcount) : std::numeric_limits<double>::quiet_NaN();
        out << name << ',' << num(100.0 * static_cast<double>(ok) / static_cast<double>(n)) << ',' << num(avg) << ','
            << num(worst) << ',' << num(bavg) << '\n';
        log << name << ": " << 100.0 * static_cast<double>(ok) / static_cast<double>(n) << "% below 100, avg cost "
            << avg << "\n";
    };
    for (std::size_t c = 0; c < nc; ++c) {
        const auto ci = static_cast<Index>(c);
        row(ctrls[c].name, [&](Index k) { return cost(ci, k); }, [&](Index k) { return bellman(ci, k); });
    }
    if (config.include_optimal)
        row("optimal", [&](Index k) { return optimal(k); },
            [](Index) { return std::numeric_limits<double>::quiet_NaN(); });
    finish(out, config.table_path);
    log << "averages over the " << subset.size() << " of " << n << " initial values stabilized by lqr; wrote "
        << config.table_path << "\n";
    return kSuccess;
}

int cmd_sweep_uniform(const RunConfig& config, std::ostream& log) {
    const auto problem = config.problem();
    const auto riccati = solve_riccati(linear_quadratic_model(problem), problem.horizon, config.solver.dt_ode);
    std::vector<ValueSchedule> storage;
    const auto ctrls = controllers(config, problem, storage, riccati);

    auto out = open_output(config.sweep_path);
    out << csv_header(config);
    out << "x";
    for (const auto& c : ctrls) out << ',' << c.name << "_cost," << c.name << "_blown_up";
    out << '\n';
    for (Index i = 0; i < config.sweep_points; ++i) {
        const double x = config.sweep_max * static_cast<double>(i) / static_cast<double>(config.sweep_points - 1);
        out << num(x);
        for (const auto& c : ctrls) {
            const auto e = evaluate_controller(problem, c.policy, VectorXd::Constant(config.dim, x), config.solver.dt_ode);
            out << ',' << num(e.cost) << ',' << (e.blown_up ? 1 : 0);
        }
        out << '\n';
    }
    finish(out, config.sweep_path);
    log << "wrote " << config.sweep_path << "\n";
    return kSuccess;
}

int cmd_riccati(const RunConfig& config, std::ostream& log) {
    const auto problem = config.problem();
    const auto sol = solve_riccati(linear_quadratic_model(problem), problem.horizon, config.riccati_dt);
    auto out = open_output(config.riccati_path);
    out << csv_header(config);
    out << "t";
    const Index d = config.dim;
    for (Index i = 0; i < d; ++i)
        for (Index j = i; j < d; ++j) out << ",p_" << i << '_' << j;
    out << '\n';
    for (std::size_t k = 0; k < sol.times.size(); ++k) {
        out << num(sol.times[k]);
        for (Index i = 0; i < d; ++i)
            for (Index j = i; j < d; ++j) out << ',' << num(sol.P[k](i, j));
        out << '\n';
    }
    finish(out, config.riccati_path);
    log << "wrote " << config.riccati_path << " (" << sol.times.size() << " time points)\n";
    return kSuccess;
}

int cmd_check(std::ostream& log) {
    int failures = 0;
    auto report = [&](const std::string& name, bool ok, double measured) {
        log << (ok ? "PASS " : "FAIL ") << name << " (" << num(measured) << ")\n";
        failures += ok ? 0 : 1;
    };
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(-2, 2);
    auto point = [&](Index d) {
        VectorXd x(d);
        for (Index i = 0; i < d; ++i) x(i) = u(rng);
        return x;
    };

    {
        const auto basis = build_basis(-2.0, 2.0, 4);
        const auto tt = random_tt<double>(6, 4, {3, 3, 3, 3, 3}, rng);
        const VectorXd x = point(6);
        const VectorXd g = gradient(tt, basis, x);
        double worst = 0;
        for (Index i = 0; i < 6; ++i) {
            VectorXd xp = x, xm = x;
            const double h = 1e-5;
            xp(i) += h;
            xm(i) -= h;
            const double fd = (evaluate(tt, basis, xp) - evaluate(tt, basis, xm)) / (2 * h);
            worst = std::max(worst, std::abs(fd - g(i)) / std::max(1.0, std::abs(g(i))));
        }
        report("tt gradient matches central differences", worst < 1e-6, worst);
    }
    {
        Eigen::VectorXd data = Eigen::VectorXd::Random(81);
        const DenseTensor<double> full({3, 3, 3, 3}, data);
        const auto tt = tt_svd(full, 0.0);
        const auto back = to_dense(tt);
        const double err = (back.data - data).norm() / data.norm();
        report("tt-svd reconstructs a random tensor", err < 1e-12, err);
    }
    {
        const auto basis = build_basis(-2.0, 2.0, 3);
        RegressionSpec spec;
        spec.samples.resize(300, 3);
        spec.targets.resize(300);
        for (Index j = 0; j < 300; ++j) {
            const VectorXd x = point(3);
            spec.samples.row(j) = x.transpose();
            spec.targets(j) = x.squaredNorm();
        }
        spec.max_sweeps = 20;
        spec.rel_tol = 0;
        const auto res = fit(spec, random_tt<double>(3, 3, {2, 2}, rng), basis);
        bool monotone = true;
        const double floor = 1e-20 * res.report.initial_empirical;
        for (std::size_t k = 1; k < res.report.residuals.size(); ++k)
            monotone = monotone && res.report.residuals[k] <= res.report.residuals[k - 1] * (1 + 1e-12) + floor;
        report("als recovers a sum of squares with non-increasing loss", monotone && res.report.max_abs_error < 1e-6,
               res.report.max_abs_error);
    }
    {
        const MatrixXd zero = MatrixXd::Zero(1, 1), one = MatrixXd::Identity(1, 1);
        const auto sol = solve_riccati(zero, one, one, one, zero, 1.0, 1e-3);
        const double err = std::abs(sol.P.front()(0, 0) - std::tanh(1.0));
        report("scalar riccati equals tanh(1)", err < 1e-8, err);
    }
    {
        BenchmarkParams params;
        params.horizon = 0.02;
        const auto p = make_benchmark(PdeKind::AllenCahn, 4, params);
        auto sig = ControlSignal::zeros(1, 0.0, 1e-3, 20);
        sig.values.setRandom();
        const VectorXd x = point(4) / 2;
        const auto terminal = terminal_cost_of(p);
        const MatrixXd g = cost_gradient(p, terminal, sig, x);
        double worst = 0;
        for (Index k = 0; k < 20; k += 7) {
            auto sp = sig, sm = sig;
            const double h = 1e-6;
            sp.values(0, k) += h;
            sm.values(0, k) -= h;
            const double fd =
                (evaluate_cost(p, terminal, sp, x, false).value - evaluate_cost(p, terminal, sm, x, false).value) / (2 * h);
            worst = std::max(worst, std::abs(fd - g(0, k)) / std::max(1e-8, std::abs(fd)));
        }
        report("adjoint gradient matches finite differences", worst < 1e-4, worst);
    }
    {
        ValueSchedule s{build_basis(-2.0, 2.0, 3), 0.0, 0.01,
                        {random_tt<double>(3, 3, {2, 2}, rng), random_tt<double>(3, 3, {2, 2}, rng)}};
        std::stringstream buf;
        write_schedule(buf, s);
        const auto back = read_schedule(buf);
        double worst = 0;
        for (int k = 0; k < 20; ++k) {
            const VectorXd x = point(3);
            for (Index l = 0; l <= 1; ++l) {
                const double a = evaluate(s.slice(l), s.basis, x);
                worst = std::max(worst, std::abs(evaluate(back.slice(l), back.basis, x) - a) / std::max(1.0, std::abs(a)));
            }
        }
        report("schedule serialization round trip", worst <= 1e-15, worst);
    }
    log << (failures == 0 ? "all checks passed\n" : std::to_string(failures) + " check(s) failed\n");
    return failures == 0 ? kSuccess : kSolverFailure;
}

}  // namespace tthjb::cli
