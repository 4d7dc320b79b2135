#include <doctest.h>

#include <cmath>
#include <random>

#include "tthjb/lqr.hpp"
#include "tthjb/ocp.hpp"

using namespace tthjb;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Smooth nonlinear problem with a state-dependent control map g(y) = B + s y c'.
ControlProblem random_problem(Index d, Index m, std::mt19937_64& rng) {
    std::normal_distribution<double> n(0, 1);
    MatrixXd a(d, d), b(d, m), r0(m, m);
    VectorXd c(m);
    for (Index i = 0; i < d * d; ++i) a.data()[i] = 0.5 * n(rng);
    for (Index i = 0; i < d * m; ++i) b.data()[i] = n(rng);
    for (Index i = 0; i < m * m; ++i) r0.data()[i] = 0.3 * n(rng);
    for (Index i = 0; i < m; ++i) c(i) = n(rng);
    const double s = 0.2;
    ControlProblem p;
    p.state_dim = d;
    p.control_dim = m;
    p.drift = [a](double t, const VectorXd& y) -> VectorXd {
        return a * y + (1.0 + t) * y.array().sin().matrix();
    };
    p.drift_vjp = [a](double t, const VectorXd& y, const VectorXd& w) -> VectorXd {
        return a.transpose() * w + (1.0 + t) * y.array().cos().matrix().cwiseProduct(w);
    };
    p.control_map = [b, c, s](double, const VectorXd& y) -> MatrixXd { return b + s * y * c.transpose(); };
    p.control_vjp = [c, s](double, const VectorXd&, const VectorXd& u, const VectorXd& w) -> VectorXd {
        return s * c.dot(u) * w;
    };
    p.running_cost = [](double, const VectorXd& y) { return y.squaredNorm() + 0.1 * y.array().pow(4).sum(); };
    p.running_cost_gradient = [](double, const VectorXd& y) -> VectorXd {
        return 2.0 * y + 0.4 * y.array().cube().matrix();
    };
    p.R = r0 * r0.transpose() + 0.5 * MatrixXd::Identity(m, m);
    p.terminal_cost = [](const VectorXd& y) { return y.array().cos().sum(); };
    p.terminal_gradient = [](const VectorXd& y) -> VectorXd { return -y.array().sin().matrix(); };
    p.horizon = 1.0;
    p.validate();
    return p;
}

VectorXd uniform_point(Index d, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    VectorXd x(d);
    for (Index i = 0; i < d; ++i) x(i) = u(rng);
    return x;
}

}  // namespace

TEST_CASE("gradient without control coupling is the control penalty") {
    LinearQuadratic lq{MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 1), MatrixXd::Identity(2, 2),
                       0.3 * MatrixXd::Identity(1, 1), MatrixXd::Identity(2, 2)};
    const auto p = make_linear_quadratic(lq, 1.0);
    ControlSignal u = ControlSignal::zeros(1, 0.0, 0.01, 10);
    u.values.setRandom();
    const MatrixXd g = cost_gradient(p, terminal_cost_of(p), u, VectorXd::Ones(2));
    CHECK((g - 2.0 * 0.3 * 0.01 * u.values).norm() < 1e-15);
}

TEST_CASE("adjoint gradient matches finite differences") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> n(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const Index d = 1 + trial % 4, m = 1 + trial % 2;
        const auto p = random_problem(d, m, rng);
        const auto terminal = terminal_cost_of(p);
        ControlSignal u = ControlSignal::zeros(m, 0.1, 0.02, 15);
        for (Index i = 0; i < u.values.size(); ++i) u.values.data()[i] = n(rng);
        const VectorXd x = uniform_point(d, rng);
        const auto eval = evaluate_cost(p, terminal, u, x);
        MatrixXd fd(m, u.steps());
        const double eps = 1e-6;
        for (Index i = 0; i < u.values.size(); ++i) {
            ControlSignal up = u, dn = u;
            up.values.data()[i] += eps;
            dn.values.data()[i] -= eps;
            fd.data()[i] = (evaluate_cost(p, terminal, up, x, false).value -
                            evaluate_cost(p, terminal, dn, x, false).value) /
                           (2 * eps);
        }
        CHECK((eval.gradient - fd).norm() / fd.norm() < 1e-4);
        CHECK((eval.costate.col(u.steps()) -
               (p.terminal_gradient(eval.trajectory.end_state()) +
                0.5 * u.dt * p.running_cost_gradient(u.end(), eval.trajectory.end_state())))
                  .norm() < 1e-14);
    }
}

TEST_CASE("value bookkeeping matches the open-loop cost") {
    std::mt19937_64 rng(12);
    const auto p = random_problem(3, 1, rng);
    const auto terminal = terminal_cost_of(p);
    const VectorXd x = uniform_point(3, rng);
    const auto res = solve_local_ocp(p, terminal, 0.0, 0.05, x, ControlSignal::zeros(1, 0.0, 1e-3, 50));
    const auto traj = flow_open_loop(p, res.control, x);
    CHECK(std::abs(res.value - (traj.cost + terminal.value(traj.end_state()))) < 1e-12);
    CHECK(res.u_at_start == res.control.values.col(0));
}

TEST_CASE("zero cost problem has zero optimal control") {
    LinearQuadratic lq{MatrixXd::Identity(3, 3), MatrixXd::Ones(3, 1), MatrixXd::Zero(3, 3),
                       MatrixXd::Identity(1, 1), MatrixXd::Zero(3, 3)};
    const auto p = make_linear_quadratic(lq, 1.0);
    const auto res = solve_local_ocp(p, zero_terminal(3), 0.0, 0.01, VectorXd::Ones(3),
                                     ControlSignal::zeros(1, 0.0, 1e-3, 10));
    CHECK(res.value == 0.0);
    CHECK(res.control.values.norm() == 0.0);
    CHECK(res.iterations == 0);
}

TEST_CASE("local LQ solve reproduces the Riccati value") {
    const auto p = make_benchmark(PdeKind::LinearHeat, 8);
    // rough initial states excite fast modes; the fine grid keeps discretization error below 1e-6
    const double dt = 1e-4;
    const auto sol = solve_riccati(linear_quadratic_model(p), p.horizon, dt);
    const MatrixXd p1 = sol.at(0.01);
    const TerminalFunction terminal{[p1](const VectorXd& y) { return y.dot(p1 * y); },
                                    [p1](const VectorXd& y) -> VectorXd { return 2.0 * p1 * y; }};
    std::mt19937_64 rng(13);
    for (int trial = 0; trial < 5; ++trial) {
        const VectorXd x = uniform_point(8, rng, -2, 2);
        OcpOptions opts;
        opts.dt = dt;
        const auto res = solve_local_ocp(p, terminal, 0.0, 0.01, x, ControlSignal::zeros(1, 0.0, dt, 100), opts);
        CHECK(std::abs(res.value - sol.value(0.0, x)) < 1e-4 * sol.value(0.0, x));
        const std::size_t last = res.costs.size() - 1;
        for (std::size_t k = 1; k < last; ++k) CHECK(res.costs[k] < res.costs[k - 1]);
        CHECK(std::abs(res.costs[last] - res.costs[last - 1]) < opts.rel_decrease_tol * res.costs[last]);
    }
}

TEST_CASE("stationarity at the discrete optimum of an LQ problem") {
    const auto p = make_benchmark(PdeKind::LinearHeat, 4);
    const auto sol = solve_riccati(linear_quadratic_model(p), p.horizon, 1e-3);
    const VectorXd x = VectorXd::LinSpaced(4, -1.5, 1.5);
    OcpOptions opts;
    opts.max_iters = 2000;
    opts.rel_decrease_tol = 0;
    opts.grad_tol = 1e-9;
    const auto res = solve_full_ocp(p, x, ControlSignal::zeros(1, 0.0, 1e-3, 300), opts);
    CHECK(res.grad_norm < 1e-6);
    CHECK(std::abs(res.value - sol.value(0.0, x)) < 1e-3 * sol.value(0.0, x));
    // the Riccati feedback sampled on the grid is close to stationary as well
    const auto u_lqr = sample_feedback(p, lqr_policy(sol), 0.0, p.horizon, x, 1e-3);
    const auto at_lqr = evaluate_cost(p, terminal_cost_of(p), u_lqr, x);
    CHECK(at_lqr.gradient.norm() / std::sqrt(1e-3) < 1e-2 * (1 + u_lqr.values.norm() * std::sqrt(1e-3)));
}

TEST_CASE("two chained local solves reproduce the full horizon value") {
    const auto p = make_benchmark(PdeKind::LinearHeat, 4);
    const auto sol = solve_riccati(linear_quadratic_model(p), p.horizon, 1e-3);
    const VectorXd x = VectorXd::LinSpaced(4, -1, 1.7);
    OcpOptions opts;
    opts.max_iters = 2000;
    const auto full = solve_full_ocp(p, x, ControlSignal::zeros(1, 0.0, 1e-3, 300), opts);
    const MatrixXd pm = sol.at(0.15);
    const TerminalFunction mid{[pm](const VectorXd& y) { return y.dot(pm * y); },
                               [pm](const VectorXd& y) -> VectorXd { return 2.0 * pm * y; }};
    const auto first = solve_local_ocp(p, mid, 0.0, 0.15, x, ControlSignal::zeros(1, 0.0, 1e-3, 150), opts);
    CHECK(std::abs(first.value - full.value) < 1e-3 * full.value);
}

TEST_CASE("perturbing the terminal function by delta moves the value by at most delta") {
    std::mt19937_64 rng(14);
    const auto p = make_benchmark(PdeKind::UnstableDiffusion, 4);
    const auto base = terminal_cost_of(p);
    const double delta = 0.1;
    const TerminalFunction shifted{[&](const VectorXd& y) { return base.value(y) + delta * std::cos(3 * y.sum()); },
                                   [&](const VectorXd& y) -> VectorXd {
                                       return base.gradient(y) -
                                              VectorXd::Constant(y.size(), 3 * delta * std::sin(3 * y.sum()));
                                   }};
    OcpOptions opts;
    opts.max_iters = 500;
    for (int trial = 0; trial < 10; ++trial) {
        const VectorXd x = uniform_point(4, rng, -1.5, 1.5);
        const auto a = solve_local_ocp(p, base, 0.0, 0.01, x, ControlSignal::zeros(1, 0.0, 1e-3, 10), opts);
        const auto b = solve_local_ocp(p, shifted, 0.0, 0.01, x, ControlSignal::zeros(1, 0.0, 1e-3, 10), opts);
        CHECK(std::abs(a.value - b.value) <= delta + 1e-6);
    }
}

TEST_CASE("extreme initial values with zero initial control fail explicitly") {
    const auto p = make_benchmark(PdeKind::UnstableDiffusion, 4);
    CHECK_THROWS_AS(solve_full_ocp(p, VectorXd::Constant(4, 3.0), ControlSignal::zeros(1, 0.0, 1e-3, 300)),
                    BlowUpError);
}

TEST_CASE("mismatched initial control is rejected") {
    const auto p = make_benchmark(PdeKind::LinearHeat, 3);
    CHECK_THROWS_AS(solve_local_ocp(p, zero_terminal(3), 0.0, 0.01, VectorXd::Zero(3),
                                    ControlSignal::zeros(1, 0.0, 1e-3, 9)),
                    DimensionError);
}

TEST_CASE("too large a step size is reported") {
    const auto p = make_benchmark(PdeKind::LinearHeat, 3);
    OcpOptions opts;
    opts.step_size = 50;
    CHECK_THROWS_AS(solve_local_ocp(p, terminal_cost_of(p), 0.0, 0.05, VectorXd::Ones(3),
                                    ControlSignal::zeros(1, 0.0, 1e-3, 50), opts),
                    SolverError);
}

TEST_CASE("discrete Riccati value equals the converged discrete optimum") {
    const auto p = make_benchmark(PdeKind::LinearHeat, 5);
    const auto lq = linear_quadratic_model(p);
    const auto disc = discrete_riccati(lq, 0.05, 1e-3);
    const auto cont = solve_riccati(lq, 0.05, 1e-3);
    const VectorXd x = VectorXd::LinSpaced(5, -2, 2);
    OcpOptions opts;
    opts.max_iters = 500;
    opts.rel_decrease_tol = 1e-14;
    const MatrixXd qt = lq.QT;
    const TerminalFunction terminal{[qt](const VectorXd& y) { return y.dot(qt * y); },
                                    [qt](const VectorXd& y) -> VectorXd { return 2.0 * qt * y; }};
    const auto res = solve_local_ocp(p, terminal, 0.0, 0.05, x, ControlSignal::zeros(1, 0.0, 1e-3, 50), opts);
    CHECK(std::abs(res.value - disc.value(0.0, x)) < 1e-10 * disc.value(0.0, x));
    CHECK(std::abs(disc.value(0.0, x) - cont.value(0.0, x)) < 1e-3 * cont.value(0.0, x));
}
