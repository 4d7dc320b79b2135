#include "tthjb/bellman.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tthjb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

SampleSet SampleSet::uniform(Index count, Index dim, double a, double b, std::uint64_t seed) {
    if (count < 1 || dim < 1) throw std::invalid_argument("SampleSet: need at least one sample and one dimension");
    if (!(a < b)) throw std::invalid_argument("SampleSet: empty box");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(a, b);
    SampleSet s;
    s.seed = seed;
    s.points.resize(count, dim);
    for (Index j = 0; j < count; ++j)
        for (Index i = 0; i < dim; ++i) s.points(j, i) = u(rng);
    return s;
}

Backend parse_backend(const std::string& name) {
    if (name == "open-loop") return Backend::OpenLoop;
    if (name == "policy-iteration") return Backend::PolicyIteration;
    throw std::invalid_argument("unknown backend '" + name + "' (expected open-loop or policy-iteration)");
}

std::string to_string(Backend backend) {
    return backend == Backend::OpenLoop ? "open-loop" : "policy-iteration";
}

void BellmanConfig::validate(const ControlProblem& problem) const {
    problem.validate();
    if (!(tau > 0.0) || !(dt_ode > 0.0)) throw std::invalid_argument("config: tau and dt_ode must be positive");
    step_count(problem.horizon, tau);
    step_count(tau, dt_ode);
    if (basis_size < 1) throw std::invalid_argument("config: basis size must be positive");
    if (static_cast<Index>(ranks.size()) != problem.state_dim - 1)
        throw std::invalid_argument("config: ranks must have " + std::to_string(problem.state_dim - 1) + " entries");
    for (const Index r : ranks)
        if (r < 1) throw std::invalid_argument("config: ranks must be positive");
    if (!(eta >= 0.0)) throw std::invalid_argument("config: eta must be non-negative");
    if (lookahead_steps < 1) throw std::invalid_argument("config: lookahead_steps must be positive");
    if (als_sweeps < 1 || terminal_sweeps < 1) throw std::invalid_argument("config: sweep counts must be positive");
    if (pi_max_iters < 1) throw std::invalid_argument("config: pi_max_iters must be positive");
    ocp.validate();
}

Index default_sample_count(Index dim, Index basis_size, const std::vector<Index>& ranks) {
    return 6 * TT::zeros(dim, basis_size, feasible_ranks(dim, basis_size, ranks)).degrees_of_freedom();
}

double StepReport::fit_error() const {
    return std::isnan(validation_error) ? max_train_error : std::max(max_train_error, validation_error);
}

std::vector<double> SolveReport::fit_errors(Index num_steps) const {
    std::vector<double> out(static_cast<std::size_t>(num_steps + 1), std::numeric_limits<double>::quiet_NaN());
    for (const auto& s : steps)
        if (s.slice >= 0 && s.slice <= num_steps) out[static_cast<std::size_t>(s.slice)] = s.fit_error();
    return out;
}

namespace {

using Clock = std::chrono::steady_clock;

struct Targets {
    VectorXd values;                  // NaN where the local solve failed
    MatrixXd controls;                // J x m_u, u*(t_l)
    std::vector<ControlSignal> signals;
};

RegressionSpec make_spec(const MatrixXd& samples, const VectorXd& targets, const BellmanConfig& config) {
    std::vector<Index> kept;
    for (Index j = 0; j < targets.size(); ++j)
        if (std::isfinite(targets(j))) kept.push_back(j);
    if (kept.empty()) throw SolverError("run_backward: every local solve failed");
    RegressionSpec spec;
    spec.samples.resize(static_cast<Index>(kept.size()), samples.cols());
    spec.targets.resize(static_cast<Index>(kept.size()));
    for (std::size_t i = 0; i < kept.size(); ++i) {
        spec.samples.row(static_cast<Index>(i)) = samples.row(kept[i]);
        spec.targets(static_cast<Index>(i)) = targets(kept[i]);
    }
    spec.max_sweeps = config.als_sweeps;
    spec.rel_tol = config.als_rel_tol;
    return spec;
}

void add_gradient_targets(RegressionSpec& spec, const ControlProblem& problem, double t, const VectorXd& targets,
                          const MatrixXd& controls, double eta) {
    GradientTargets gt;
    gt.eta = eta;
    gt.controls.resize(spec.samples.rows(), problem.control_dim);
    const Eigen::LLT<MatrixXd> r(problem.R);
    Index i = 0;
    for (Index j = 0; j < targets.size(); ++j) {
        if (!std::isfinite(targets(j))) continue;
        gt.controls.row(i) = controls.row(j);
        const VectorXd x = spec.samples.row(i).transpose();
        gt.control_maps.push_back(-0.5 * r.solve(problem.control_map(t, x).transpose()));
        ++i;
    }
    spec.gradient_targets = std::move(gt);
}

Targets open_loop_targets(const ControlProblem& problem, const BellmanConfig& config, const TT& next,
                          const Basis& basis, double t_l, const MatrixXd& points,
                          const std::vector<ControlSignal>* warm) {
    const Index n = step_count(config.tau, config.dt_ode);
    const TerminalFunction terminal = tt_terminal(next, basis);
    OcpOptions opts = config.ocp;
    opts.dt = config.dt_ode;
    Targets out;
    out.values.resize(points.rows());
    out.controls = MatrixXd::Zero(points.rows(), problem.control_dim);
    out.signals.resize(static_cast<std::size_t>(points.rows()));
    for (Index j = 0; j < points.rows(); ++j) {
        const VectorXd x = points.row(j).transpose();
        ControlSignal init = ControlSignal::zeros(problem.control_dim, t_l, config.dt_ode, n);
        if (warm && static_cast<Index>(warm->size()) == points.rows()) {
            const auto& prev = (*warm)[static_cast<std::size_t>(j)];
            if (prev.values.rows() == problem.control_dim && prev.values.allFinite()) {
                const Index k = std::min(prev.steps(), n);
                init.values.leftCols(k) = prev.values.leftCols(k);
            }
        }
        try {
            auto res = solve_local_ocp(problem, terminal, t_l, t_l + config.tau, x, init, opts);
            out.values(j) = res.value;
            out.controls.row(j) = res.u_at_start.transpose();
            out.signals[static_cast<std::size_t>(j)] = std::move(res.control);
        } catch (const Error&) {
            out.values(j) = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

ValueSchedule tail_schedule(const Basis& basis, const std::vector<TT>& slices, Index from, double tau) {
    ValueSchedule s;
    s.basis = basis;
    s.tau = tau;
    s.start_time = tau * static_cast<double>(from);
    s.slices.assign(slices.begin() + from, slices.end());
    return s;
}

VectorXd policy_targets(const ControlProblem& problem, const BellmanConfig& config, const ValueSchedule& tail,
                        const TT& current, double t_l, const MatrixXd& points) {
    const Index lookahead = std::min<Index>(config.lookahead_steps, tail.num_steps() + 1);
    const double t_end = tail.time(lookahead - 1);
    InterpolatedValue value{current, &tail.slice(0), &tail.basis, t_l, config.tau};
    const Policy alpha = interpolated_policy(problem, value);
    VectorXd out(points.rows());
    for (Index j = 0; j < points.rows(); ++j) {
        const VectorXd x = points.row(j).transpose();
        try {
            const auto r = policy_rollout(problem, tail, alpha, t_l, tail.start_time, t_end, x, config.dt_ode);
            out(j) = r.running_cost + evaluate(tail.slice(lookahead - 1), tail.basis, r.end_state);
        } catch (const BlowUpError&) {
            out(j) = std::numeric_limits<double>::quiet_NaN();
        }
    }
    return out;
}

double max_error(const TT& tt, const Basis& basis, const MatrixXd& points, const VectorXd& targets) {
    double worst = 0.0;
    for (Index j = 0; j < points.rows(); ++j) {
        if (!std::isfinite(targets(j))) continue;
        worst = std::max(worst, std::abs(evaluate(tt, basis, VectorXd(points.row(j).transpose())) - targets(j)));
    }
    return worst;
}

void fill_from_fit(StepReport& step, const FitReport& fit) {
    step.empirical_residual = fit.empirical.empty() ? fit.initial_empirical : fit.empirical.back();
    step.max_train_error = fit.max_abs_error;
    step.final_delta = fit.final_delta;
    step.sweeps = fit.sweeps_run;
    step.warnings.insert(step.warnings.end(), fit.warnings.begin(), fit.warnings.end());
}

}  // namespace

BackwardResult run_backward(const ControlProblem& problem, const BellmanConfig& config, const SampleSet& samples,
                            const MatrixXd* validation, const std::function<void(const StepReport&)>& progress) {
    config.validate(problem);
    const Index d = problem.state_dim;
    if (samples.points.cols() != d) throw DimensionError("run_backward: samples have wrong dimension");
    if (validation && validation->cols() != d) throw DimensionError("run_backward: validation points have wrong dimension");
    const Index steps = step_count(problem.horizon, config.tau);
    const Basis basis = build_basis(problem.omega_a, problem.omega_b, config.basis_size);
    const auto ranks = feasible_ranks(d, config.basis_size, config.ranks);
    const MatrixXd& points = samples.points;
    std::mt19937_64 rng(config.seed);

    BackwardResult result;
    SolveReport& report = result.report;
    std::vector<TT> slices(static_cast<std::size_t>(steps + 1));

    auto finish_partial = [&](Index from) {
        result.schedule = tail_schedule(basis, slices, from, config.tau);
    };

    // terminal slice
    {
        const auto start = Clock::now();
        StepReport step;
        step.slice = steps;
        step.time = problem.horizon;
        RegressionSpec spec;
        spec.samples = points;
        spec.targets.resize(points.rows());
        for (Index j = 0; j < points.rows(); ++j) spec.targets(j) = problem.terminal_cost(points.row(j).transpose());
        spec.max_sweeps = config.terminal_sweeps;
        spec.rel_tol = 0.0;
        spec.abs_tol = 1e-24 * std::max(1.0, spec.targets.squaredNorm() / static_cast<double>(points.rows()));
        auto fitted = fit(spec, random_tt<double>(d, config.basis_size, ranks, rng), basis);
        fill_from_fit(step, fitted.report);
        if (step.empirical_residual >= 1e-8)
            step.warnings.push_back("terminal fit residual " + std::to_string(step.empirical_residual) +
                                    " is not below 1e-8");
        if (validation) {
            VectorXd vt(validation->rows());
            for (Index j = 0; j < validation->rows(); ++j) vt(j) = problem.terminal_cost(validation->row(j).transpose());
            step.validation_error = max_error(fitted.tt, basis, *validation, vt);
        }
        slices.back() = std::move(fitted.tt);
        step.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        report.steps.push_back(step);
        if (progress) progress(step);
        if (step.empirical_residual > config.abort_residual) {
            report.aborted = true;
            report.abort_reason = "terminal fit residual above abort threshold";
            finish_partial(steps);
            return result;
        }
    }

    std::vector<ControlSignal> warm;
    for (Index l = steps - 1; l >= 0; --l) {
        const auto start = Clock::now();
        const double t_l = config.tau * static_cast<double>(l);
        const auto ul = static_cast<std::size_t>(l);
        StepReport step;
        step.slice = l;
        step.time = t_l;
        const TT& next = slices[ul + 1];
        const TT init = config.warm_start ? next : random_tt<double>(d, config.basis_size, ranks, rng);

        VectorXd targets;
        MatrixXd controls;
        if (config.backend == Backend::OpenLoop) {
            auto t = open_loop_targets(problem, config, next, basis, t_l, points, config.warm_start ? &warm : nullptr);
            RegressionSpec spec = make_spec(points, t.values, config);
            if (config.eta > 0.0) add_gradient_targets(spec, problem, t_l, t.values, t.controls, config.eta);
            auto fitted = fit(spec, init, basis);
            fill_from_fit(step, fitted.report);
            slices[ul] = std::move(fitted.tt);
            step.failed_samples = (t.values.array().isNaN()).count();
            targets = std::move(t.values);
            controls = std::move(t.controls);
            warm = std::move(t.signals);
            if (validation) {
                auto vt = open_loop_targets(problem, config, next, basis, t_l, *validation, nullptr);
                step.validation_error = max_error(slices[ul], basis, *validation, vt.values);
            }
        } else {
            const ValueSchedule tail = tail_schedule(basis, slices, l + 1, config.tau);
            PolicyIterationOptions opts;
            opts.tol = config.pi_tol;
            opts.max_iters = config.pi_max_iters;
            opts.lookahead_steps = config.lookahead_steps;
            opts.dt = config.dt_ode;
            opts.als_sweeps = config.als_sweeps;
            opts.als_rel_tol = config.als_rel_tol;
            auto pi = policy_iteration_local(problem, tail, t_l, points, opts);
            fill_from_fit(step, pi.fit);
            step.pi_iterations = pi.iterations;
            step.pi_converged = pi.converged;
            step.failed_samples = pi.failed_samples;
            if (!pi.converged)
                step.warnings.push_back("policy iteration did not converge in " + std::to_string(pi.iterations) +
                                        " iterations");
            slices[ul] = std::move(pi.value);
            targets = std::move(pi.targets);
            if (validation) {
                const VectorXd vt = policy_targets(problem, config, tail, slices[ul], t_l, *validation);
                step.validation_error = max_error(slices[ul], basis, *validation, vt);
            }
            if (l == 0) {
                controls.resize(points.rows(), problem.control_dim);
                const ValueSchedule head = tail_schedule(basis, slices, 0, config.tau);
                for (Index j = 0; j < points.rows(); ++j)
                    controls.row(j) = feedback(head, problem, 0.0, points.row(j).transpose()).transpose();
            }
        }
        step.seconds = std::chrono::duration<double>(Clock::now() - start).count();
        report.steps.push_back(step);
        if (progress) progress(step);
        if (l == 0) {
            report.sample_values = targets;
            report.sample_controls = controls;
        }
        if (step.empirical_residual > config.abort_residual) {
            report.aborted = true;
            report.abort_reason = "fit residual of slice " + std::to_string(l) + " above abort threshold";
            finish_partial(l);
            return result;
        }
    }
    finish_partial(0);
    return result;
}

ControllerEvaluation evaluate_controller(const ControlProblem& problem, const Policy& policy, const VectorXd& x0,
                                         double dt, const std::function<double(const VectorXd&)>& estimate) {
    ControllerEvaluation out;
    try {
        const auto r = flow_closed_loop(problem, policy, 0.0, x0, problem.horizon, dt);
        out.cost = r.cost + problem.terminal_cost(r.end_state);
    } catch (const BlowUpError&) {
        out.cost = std::numeric_limits<double>::infinity();
    }
    out.blown_up = !(out.cost < kCostFailure);
    if (estimate && std::isfinite(out.cost)) out.bellman_error = std::abs(estimate(x0) - out.cost);
    return out;
}

ControllerEvaluation evaluate_controller(const ControlProblem& problem, const ValueSchedule& schedule,
                                         const VectorXd& x0, double dt) {
    return evaluate_controller(problem, schedule_policy(schedule, problem), x0, dt,
                               [&](const VectorXd& x) { return schedule.value(schedule.start_time, x); });
}

VectorXd sample_polynomial_initial(std::uint64_t seed, Index d) {
    if (d < 2) throw std::invalid_argument("sample_polynomial_initial: need d >= 2");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> degree(2, 20);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int k = degree(rng);
    VectorXd coeffs(k + 1);
    do {
        for (int i = 0; i <= k; ++i) coeffs(i) = normal(rng);
    } while (coeffs.isZero());
    auto p = [&](double x) {
        double acc = 0.0;
        for (int i = k; i >= 0; --i) acc = acc * x + coeffs(i);
        return acc * (x - 1.0) * (x + 1.0);
    };
    double peak = 0.0;
    for (int i = 0; i <= 2000; ++i) peak = std::max(peak, std::abs(p(-1.0 + 2.0 * i / 2000.0)));
    const double scale = 1.9 / peak;
    VectorXd out(d);
    for (Index i = 0; i < d; ++i) out(i) = scale * p(-1.0 + 2.0 * static_cast<double>(i + 1) / static_cast<double>(d + 1));
    return out;
}

ErrorPropagationReport check_error_propagation(const ValueSchedule& schedule,
                                               const std::function<double(double, const VectorXd&)>& reference,
                                               const MatrixXd& points, const std::vector<double>& fit_errors,
                                               double factor) {
    const Index steps = schedule.num_steps();
    if (static_cast<Index>(fit_errors.size()) != steps + 1)
        throw DimensionError("check_error_propagation: need one fit error per slice");
    ErrorPropagationReport out;
    for (Index k = 0; k < steps; ++k) {
        const double e = fit_errors[static_cast<std::size_t>(k)];
        if (std::isfinite(e)) out.max_fit_error = std::max(out.max_fit_error, e);
    }
    const double terminal = std::isfinite(fit_errors.back()) ? fit_errors.back() : 0.0;
    for (Index l = 0; l <= steps; ++l) {
        const Index slice = steps - l;
        const double t = schedule.time(slice);
        double worst = 0.0;
        for (Index j = 0; j < points.rows(); ++j) {
            const VectorXd x = points.row(j).transpose();
            worst = std::max(worst, std::abs(evaluate(schedule.slice(slice), schedule.basis, x) - reference(t, x)));
        }
        const double bound = factor * (static_cast<double>(l) * out.max_fit_error + terminal);
        out.errors.push_back(worst);
        out.bounds.push_back(bound);
        if (worst > bound) out.holds = false;
    }
    return out;
}

}  // namespace tthjb
