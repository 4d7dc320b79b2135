#include <doctest.h>

#include <random>

#include "tthjb/als.hpp"

using namespace tthjb;

namespace {

Eigen::MatrixXd uniform_samples(Index n, Index d, std::mt19937_64& rng, double lo = -2, double hi = 2) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd s(n, d);
    for (Index j = 0; j < n; ++j)
        for (Index i = 0; i < d; ++i) s(j, i) = u(rng);
    return s;
}

// Squared H^2_mix norm of the represented function by tensor Gauss-Legendre quadrature
// over all derivative multi-orders alpha in {0,1,2}^d.
double h2mix_norm_sq(const TT& tt, const Basis& basis) {
    const auto dense = to_dense(tt);
    const Index d = tt.order(), m = tt.mode_size();
    auto [nodes, weights] = gauss_legendre<double>(m + 2);
    const double half = (basis.upper() - basis.lower()) / 2, mid = (basis.upper() + basis.lower()) / 2;
    const Index q = nodes.size();
    // table[order](node, i) = phi_i^{(order)}(x_node)
    std::vector<Eigen::MatrixXd> table(3, Eigen::MatrixXd(q, m));
    for (Index k = 0; k < q; ++k) {
        const double x = mid + half * nodes(k);
        table[0].row(k) = basis.values(x).transpose();
        table[1].row(k) = basis.derivatives(x).transpose();
        table[2].row(k) = basis.second_derivatives(x).transpose();
    }
    Index n_alpha = 1, n_nodes = 1;
    for (Index i = 0; i < d; ++i) {
        n_alpha *= 3;
        n_nodes *= q;
    }
    double total = 0;
    for (Index a = 0; a < n_alpha; ++a) {
        std::vector<Index> alpha(static_cast<std::size_t>(d));
        for (Index i = d - 1, rem = a; i >= 0; --i, rem /= 3) alpha[static_cast<std::size_t>(i)] = rem % 3;
        for (Index nd = 0; nd < n_nodes; ++nd) {
            std::vector<Index> node(static_cast<std::size_t>(d));
            double w = 1;
            for (Index i = d - 1, rem = nd; i >= 0; --i, rem /= q) {
                node[static_cast<std::size_t>(i)] = rem % q;
                w *= half * weights(rem % q);
            }
            double val = 0;
            for (Index flat = 0; flat < dense.data.size(); ++flat) {
                double term = dense.data[flat];
                for (Index i = d - 1, rem = flat; i >= 0; --i, rem /= m) {
                    const auto ui = static_cast<std::size_t>(i);
                    term *= table[static_cast<std::size_t>(alpha[ui])](node[ui], rem % m);
                }
                val += term;
            }
            total += w * val * val;
        }
    }
    return total;
}

}  // namespace

TEST_CASE("constant targets are fitted exactly") {
    std::mt19937_64 rng(1);
    const auto basis = build_basis(-2.0, 2.0, 3);
    RegressionSpec spec;
    spec.samples = uniform_samples(200, 3, rng);
    spec.targets = Eigen::VectorXd::Constant(200, 3.7);
    spec.max_sweeps = 20;
    spec.rel_tol = 0;
    const auto init = random_tt<double>(3, 3, {2, 2}, rng);
    const auto res = fit(spec, init, basis);
    const auto test = uniform_samples(50, 3, rng);
    for (Index j = 0; j < 50; ++j)
        CHECK(std::abs(evaluate(res.tt, basis, Eigen::VectorXd(test.row(j).transpose())) - 3.7) < 1e-8);
}

TEST_CASE("sum of squares in four variables is recovered") {
    std::mt19937_64 rng(2);
    const auto basis = build_basis(-2.0, 2.0, 3);
    auto truth = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    RegressionSpec spec;
    spec.samples = uniform_samples(500, 4, rng);
    spec.targets.resize(500);
    for (Index j = 0; j < 500; ++j) spec.targets(j) = truth(spec.samples.row(j).transpose());
    spec.max_sweeps = 30;
    spec.rel_tol = 0;
    const auto res = fit(spec, random_tt<double>(4, 3, {2, 2, 2}, rng), basis);

    const auto test = uniform_samples(1000, 4, rng);
    double err = 0, norm = 0;
    for (Index j = 0; j < 1000; ++j) {
        const Eigen::VectorXd x = test.row(j).transpose();
        const double e = evaluate(res.tt, basis, x) - truth(x);
        err += e * e;
        norm += truth(x) * truth(x);
    }
    CHECK(std::sqrt(err / norm) < 1e-6);
    // below this level the losses are rounding noise of the target scale
    const double floor = 1e-20 * res.report.initial_empirical;
    for (std::size_t k = 1; k < res.report.residuals.size(); ++k)
        CHECK(res.report.residuals[k] <= res.report.residuals[k - 1] * (1 + 1e-12) + floor);
    for (const auto& sweep : res.report.micro_losses)
        for (std::size_t k = 1; k < sweep.size(); ++k) CHECK(sweep[k] <= sweep[k - 1] * (1 + 1e-10) + floor);
    for (std::size_t k = 1; k < res.report.deltas.size(); ++k) CHECK(res.report.deltas[k] <= res.report.deltas[k - 1]);
}

TEST_CASE("reference configuration counts") {
    const std::vector<Index> ranks{3, 4, 5, 5, 5, 6, 6, 6, 6, 7, 7, 7, 7, 7, 7, 7,
                                   7, 7, 7, 6, 6, 6, 6, 6, 6, 6, 5, 5, 5, 4, 3};
    const auto tt = TT::zeros(32, 5, ranks);
    CHECK(tt.degrees_of_freedom() == 5395);
    CHECK(6 * tt.degrees_of_freedom() == 32370);
}

TEST_CASE("single-core micro step equals polynomial ridge regression") {
    std::mt19937_64 rng(3);
    const auto basis = build_basis(-2.0, 2.0, 4);
    RegressionSpec spec;
    spec.samples = uniform_samples(40, 1, rng);
    spec.targets.resize(40);
    for (Index j = 0; j < 40; ++j) spec.targets(j) = std::sin(spec.samples(j, 0));
    const double delta = 0.05;
    const auto out = micro_step(random_tt<double>(1, 4, {}, rng), 0, spec, basis, delta);

    Eigen::MatrixXd a(40, 4);
    for (Index j = 0; j < 40; ++j) a.row(j) = basis.values(spec.samples(j, 0)).transpose();
    const Eigen::VectorXd ridge =
        (a.transpose() * a / 40.0 + delta / 4.0 * Eigen::MatrixXd::Identity(4, 4)).ldlt().solve(a.transpose() * spec.targets / 40.0);
    CHECK((out.core(0).data - ridge).norm() < 1e-12);
}

TEST_CASE("micro steps never increase the regularised loss") {
    std::mt19937_64 rng(4);
    const auto basis = build_basis(-2.0, 2.0, 3);
    for (int trial = 0; trial < 10; ++trial) {
        RegressionSpec spec;
        spec.samples = uniform_samples(60, 3, rng);
        spec.targets = Eigen::VectorXd::Random(60);
        auto tt = random_tt<double>(3, 3, {2, 3}, rng);
        for (Index pivot = 0; pivot < 3; ++pivot) {
            double before = 0, after = 0;
            tt = micro_step(tt, pivot, spec, basis, 1e-3, &before, &after);
            CHECK(after <= before + 1e-12);
        }
    }
}

TEST_CASE("large penalty drives the fit to zero") {
    std::mt19937_64 rng(5);
    const auto basis = build_basis(-2.0, 2.0, 3);
    RegressionSpec spec;
    spec.samples = uniform_samples(30, 2, rng);
    spec.targets = Eigen::VectorXd::Constant(30, 5.0);
    const auto out = micro_step(random_tt<double>(2, 3, {2}, rng), 1, spec, basis, 1e12);
    CHECK(out.core(1).data.norm() < 1e-9);
}

TEST_CASE("pivot-core penalty equals the H2_mix norm") {
    std::mt19937_64 rng(6);
    const auto basis = build_basis(-2.0, 2.0, 3);
    const auto tt = random_tt<double>(3, 3, {2, 2}, rng);
    const double quad = h2mix_norm_sq(tt, basis);
    for (Index pivot = 0; pivot < 3; ++pivot) {
        const auto canon = orthogonalize(tt, pivot);
        const double delta = 0.37;
        CHECK(std::abs(delta * canon.core(pivot).data.squaredNorm() - delta * quad) < 1e-8);
    }
}

TEST_CASE("gradient-augmented loss matches control targets") {
    std::mt19937_64 rng(7);
    const Index d = 4;
    const auto basis = build_basis(-2.0, 2.0, 3);
    // quadratic truth v(x) = x' P x with a symmetric positive definite P
    Eigen::MatrixXd b = Eigen::MatrixXd::Random(d, d);
    const Eigen::MatrixXd p = 0.1 * (b * b.transpose()) + 0.2 * Eigen::MatrixXd::Identity(d, d);
    Eigen::MatrixXd g(d, 1);
    g << 0, 1, 1, 0;
    const Eigen::MatrixXd cmap = -0.5 * (1.0 / 0.1) * g.transpose();

    RegressionSpec spec;
    spec.samples = uniform_samples(400, d, rng);
    spec.targets.resize(400);
    GradientTargets gt;
    gt.controls.resize(400, 1);
    gt.control_maps = {cmap};
    gt.eta = 1.0;
    for (Index j = 0; j < 400; ++j) {
        const Eigen::VectorXd x = spec.samples.row(j).transpose();
        spec.targets(j) = x.dot(p * x);
        gt.controls.row(j) = (cmap * (2 * p * x)).transpose();
    }
    spec.gradient_targets = gt;
    spec.max_sweeps = 120;
    spec.rel_tol = 0;
    const auto res = fit(spec, random_tt<double>(d, 3, {3, 4, 3}, rng), basis);
    double worst = 0;
    for (Index j = 0; j < 400; ++j) {
        const Eigen::VectorXd x = spec.samples.row(j).transpose();
        const Eigen::VectorXd u = cmap * gradient(res.tt, basis, x);
        worst = std::max(worst, (u - gt.controls.row(j).transpose()).norm());
    }
    CHECK(worst < 1e-4);
    CHECK(res.report.empirical.back() == doctest::Approx(empirical_loss(res.tt, spec, basis)).epsilon(1e-6));
}

TEST_CASE("rank-deficient unregularised problem falls back to minimum norm") {
    std::mt19937_64 rng(8);
    const auto basis = build_basis(-2.0, 2.0, 4);
    RegressionSpec spec;
    spec.samples = uniform_samples(2, 1, rng);
    spec.targets = Eigen::Vector2d(1.0, 2.0);
    spec.delta0 = 0.0;
    spec.max_sweeps = 1;
    const auto res = fit(spec, random_tt<double>(1, 4, {}, rng), basis);
    CHECK(res.report.warnings.size() == 1);
    CHECK(res.report.max_abs_error < 1e-10);
}

TEST_CASE("regression input validation") {
    RegressionSpec spec;
    spec.samples = Eigen::MatrixXd::Zero(3, 2);
    spec.targets = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(spec.validate(2), DimensionError);
    spec.targets = Eigen::VectorXd::Zero(3);
    CHECK_NOTHROW(spec.validate(2));
    CHECK_THROWS_AS(spec.validate(3), DimensionError);
    spec.delta0 = -1.0;
    CHECK_THROWS_AS(spec.validate(2), std::invalid_argument);
}
