#include <doctest.h>

#include <cmath>
#include <random>

#include <unsupported/Eigen/MatrixFunctions>

#include "tthjb/lqr.hpp"

using namespace tthjb;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST_CASE("zero costs give zero Riccati solution") {
    const MatrixXd a = MatrixXd::Random(3, 3), b = MatrixXd::Random(3, 1);
    const auto sol = solve_riccati(a, b, MatrixXd::Zero(3, 3), MatrixXd::Identity(1, 1), MatrixXd::Zero(3, 3), 1.0,
                                   1e-2);
    for (const auto& p : sol.P) CHECK(p.norm() == 0.0);
}

TEST_CASE("scalar Riccati equation has the tanh solution") {
    const MatrixXd zero = MatrixXd::Zero(1, 1), one = MatrixXd::Identity(1, 1);
    const auto sol = solve_riccati(zero, one, one, one, zero, 1.0, 1e-3);
    CHECK(std::abs(sol.P.front()(0, 0) - std::tanh(1.0)) < 1e-8);
    CHECK(sol.P.back()(0, 0) == 0.0);
    // P(t) = tanh(1 - t)
    CHECK(std::abs(sol.at(0.5)(0, 0) - std::tanh(0.5)) < 1e-6);
}

TEST_CASE("without control the Riccati equation is a Lyapunov equation") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0, 1);
    const Index d = 4;
    MatrixXd a(d, d), q0(d, d), qt0(d, d);
    for (Index i = 0; i < d * d; ++i) {
        a.data()[i] = 0.5 * n(rng);
        q0.data()[i] = n(rng);
        qt0.data()[i] = n(rng);
    }
    const MatrixXd q = q0 * q0.transpose(), qt = qt0 * qt0.transpose();
    const double T = 0.7;
    const auto sol = solve_riccati(a, MatrixXd::Zero(d, 1), q, MatrixXd::Identity(1, 1), qt, T, 1e-3);
    // Van Loan block exponential for int_0^T e^{A's} Q e^{As} ds
    MatrixXd m = MatrixXd::Zero(2 * d, 2 * d);
    m.topLeftCorner(d, d) = -a.transpose();
    m.topRightCorner(d, d) = q;
    m.bottomRightCorner(d, d) = a;
    const MatrixXd e = (m * T).exp();
    const MatrixXd f22 = e.bottomRightCorner(d, d);
    const MatrixXd integral = f22.transpose() * e.topRightCorner(d, d);
    const MatrixXd expected = f22.transpose() * qt * f22 + integral;
    CHECK((sol.P.front() - expected).cwiseAbs().maxCoeff() < 1e-8 * (1 + expected.cwiseAbs().maxCoeff()));
}

TEST_CASE("Riccati solution is symmetric positive semidefinite") {
    const auto p = make_benchmark(PdeKind::AllenCahn, 6);
    const auto lq = linear_quadratic_model(p);
    const auto sol = solve_riccati(lq, p.horizon, 1e-3);
    CHECK(sol.P.back() == lq.QT);
    for (const auto& m : sol.P) {
        CHECK((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-10);
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
        CHECK(es.eigenvalues().minCoeff() >= -1e-8);
    }
}

TEST_CASE("LQR feedback trivial cases") {
    const auto p = make_benchmark(PdeKind::LinearHeat, 4);
    const auto sol = solve_riccati(linear_quadratic_model(p), p.horizon, 1e-3);
    CHECK(lqr_feedback(sol, 0.1, VectorXd::Zero(4)).norm() == 0.0);
    const auto zero_b = solve_riccati(MatrixXd::Identity(2, 2), MatrixXd::Zero(2, 1), MatrixXd::Identity(2, 2),
                                      MatrixXd::Identity(1, 1), MatrixXd::Identity(2, 2), 1.0, 1e-2);
    CHECK(lqr_feedback(zero_b, 0.3, VectorXd::Ones(2)).norm() == 0.0);
}

TEST_CASE("closed-loop LQR cost equals the Riccati value") {
    const auto p = make_benchmark(PdeKind::LinearHeat, 8);
    const auto sol = solve_riccati(linear_quadratic_model(p), p.horizon, 1e-3);
    const Policy policy = lqr_policy(sol);
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int trial = 0; trial < 5; ++trial) {
        VectorXd x(8);
        for (Index i = 0; i < 8; ++i) x(i) = u(rng);
        const auto r = flow_closed_loop(p, policy, 0.0, x, p.horizon, 1e-3);
        const double total = r.cost + p.terminal_cost(r.end_state);
        CHECK(std::abs(total - sol.value(0.0, x)) < 1e-3 * sol.value(0.0, x));
    }
}

TEST_CASE("linearization of the built-in systems") {
    const auto t1 = make_benchmark(PdeKind::UnstableDiffusion, 5);
    auto [a1, b1] = linearize(t1);
    CHECK((a1 - t1.grid->laplacian()).norm() < 1e-12);
    CHECK((b1 - MatrixXd(t1.grid->actuator())).norm() == 0.0);
    const auto t2 = make_benchmark(PdeKind::AllenCahn, 5);
    auto [a2, b2] = linearize(t2);
    CHECK((a2 - (0.2 * t2.grid->laplacian() + MatrixXd::Identity(5, 5))).norm() < 1e-12);
    const auto heat = make_benchmark(PdeKind::LinearHeat, 5);
    auto [a3, b3] = linearize(heat);
    CHECK(a3 == heat.linear->A);
    CHECK(b3 == heat.linear->B);

    const auto lq = linear_quadratic_model(t1);
    CHECK((lq.Q - MatrixXd::Identity(5, 5) / 6.0).norm() < 1e-14);
    CHECK((lq.QT - MatrixXd::Identity(5, 5) / 6.0).norm() < 1e-14);
}
