#include "tthjb/polit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace tthjb {

using Eigen::MatrixXd;
using Eigen::VectorXd;

double InterpolatedValue::weight(double t) const { return std::clamp((t - t_start) / tau, 0.0, 1.0); }

double InterpolatedValue::value(double t, const VectorXd& x) const {
    const double w = weight(t);
    return (1.0 - w) * evaluate(current, *basis, x) + w * evaluate(*next, *basis, x);
}

VectorXd InterpolatedValue::gradient(double t, const VectorXd& x) const {
    const double w = weight(t);
    if (w == 1.0) return tthjb::gradient(*next, *basis, x);
    VectorXd g = (1.0 - w) * tthjb::gradient(current, *basis, x);
    if (w > 0.0) g += w * tthjb::gradient(*next, *basis, x);
    return g;
}

Policy interpolated_policy(const ControlProblem& problem, const InterpolatedValue& value) {
    return [&problem, &value](double t, const VectorXd& x) -> VectorXd {
        return problem.optimal_control(t, x, value.gradient(t, x));
    };
}

RolloutResult policy_rollout(const ControlProblem& problem, const ValueSchedule& schedule, const Policy& alpha,
                             double t_l, double t_split, double t_end, const VectorXd& x, double dt) {
    const Index n = step_count(t_end - t_l, dt);
    const Policy later = [&](double t, const VectorXd& y) -> VectorXd { return feedback(schedule, problem, t, y); };
    RolloutResult out;
    VectorXd y = x;
    for (Index k = 0; k < n; ++k) {
        const double t = t_l + static_cast<double>(k) * dt;
        const double t1 = t_l + static_cast<double>(k + 1) * dt;
        const Policy& pol = t < t_split - 1e-9 * dt ? alpha : later;
        const VectorField rhs = [&](double s, const VectorXd& z) -> VectorXd { return problem.rhs(s, z, pol(s, z)); };
        const double c0 = problem.stage_cost(t, y, pol(t, y));
        y = rk4_step(rhs, t, y, dt);
        if (!y.allFinite() || y.norm() > kBlowUpNorm) throw BlowUpError("policy_rollout: trajectory blew up", t1);
        out.running_cost += 0.5 * dt * (c0 + problem.stage_cost(t1, y, pol(t1, y)));
    }
    out.end_state = y;
    return out;
}

void PolicyIterationOptions::validate() const {
    if (!(tol >= 0.0)) throw std::invalid_argument("policy iteration: tol must be non-negative");
    if (max_iters < 1) throw std::invalid_argument("policy iteration: max_iters must be positive");
    if (lookahead_steps < 1) throw std::invalid_argument("policy iteration: lookahead_steps must be positive");
    if (!(dt > 0.0)) throw std::invalid_argument("policy iteration: dt must be positive");
}

PolicyIterationResult policy_iteration_local(const ControlProblem& problem, const ValueSchedule& schedule,
                                             double t_l, const MatrixXd& samples,
                                             const PolicyIterationOptions& opts) {
    opts.validate();
    if (samples.cols() != problem.state_dim) throw DimensionError("policy_iteration_local: samples have wrong width");
    const double tau = schedule.start_time - t_l;
    if (!(tau > 0.0)) throw std::invalid_argument("policy_iteration_local: t_l must precede the schedule");
    const Index lookahead = std::min<Index>(opts.lookahead_steps, schedule.num_steps() + 1);
    const double t_next = schedule.start_time;
    const double t_end = schedule.time(lookahead - 1);
    const TT& end_slice = schedule.slice(lookahead - 1);
    const Basis& basis = schedule.basis;
    const Index j_count = samples.rows();

    InterpolatedValue value{schedule.slice(0), &schedule.slice(0), &basis, t_l, tau};
    const Policy alpha = interpolated_policy(problem, value);

    PolicyIterationResult out;
    out.value = schedule.slice(0);
    VectorXd previous(j_count);
    for (Index j = 0; j < j_count; ++j) previous(j) = evaluate(out.value, basis, VectorXd(samples.row(j).transpose()));

    for (int k = 0; k < opts.max_iters; ++k) {
        VectorXd targets(j_count);
        std::vector<Index> kept;
        kept.reserve(static_cast<std::size_t>(j_count));
        for (Index j = 0; j < j_count; ++j) {
            const VectorXd x = samples.row(j).transpose();
            try {
                const auto r = policy_rollout(problem, schedule, alpha, t_l, t_next, t_end, x, opts.dt);
                targets(j) = r.running_cost + evaluate(end_slice, basis, r.end_state);
                kept.push_back(j);
            } catch (const BlowUpError&) {
                targets(j) = std::numeric_limits<double>::quiet_NaN();
            }
        }
        out.failed_samples = j_count - static_cast<Index>(kept.size());
        if (kept.empty()) throw SolverError("policy_iteration_local: every rollout blew up");

        RegressionSpec spec;
        spec.samples.resize(static_cast<Index>(kept.size()), problem.state_dim);
        spec.targets.resize(static_cast<Index>(kept.size()));
        for (std::size_t i = 0; i < kept.size(); ++i) {
            spec.samples.row(static_cast<Index>(i)) = samples.row(kept[i]);
            spec.targets(static_cast<Index>(i)) = targets(kept[i]);
        }
        spec.max_sweeps = opts.als_sweeps;
        spec.rel_tol = opts.als_rel_tol;
        auto fitted = fit(spec, value.current, basis);

        VectorXd now(j_count);
        for (Index j = 0; j < j_count; ++j) now(j) = evaluate(fitted.tt, basis, VectorXd(samples.row(j).transpose()));
        const double change = (now - previous).cwiseAbs().maxCoeff();
        out.changes.push_back(change);
        out.iterations = k + 1;
        out.value = fitted.tt;
        out.targets = targets;
        out.fit = std::move(fitted.report);
        value.current = out.value;
        previous = now;
        if (change < opts.tol) {
            out.converged = true;
            break;
        }
    }
    return out;
}

}  // namespace tthjb
