#include <doctest.h>

#include <random>

#include "tthjb/tensor_train.hpp"

using namespace tthjb;

namespace {

// Brute-force evaluation: full sum over every multi-index of c[i] * prod_k phi_{i_k}(x_k).
double brute_force_eval(const TT& tt, const Basis& basis, const Eigen::VectorXd& x) {
    const auto dense = to_dense(tt);
    const Index d = tt.order(), m = tt.mode_size();
    double total = 0;
    std::vector<Index> idx(static_cast<std::size_t>(d), 0);
    for (Index flat = 0; flat < dense.data.size(); ++flat) {
        Index rem = flat;
        for (Index k = d - 1; k >= 0; --k) {
            idx[static_cast<std::size_t>(k)] = rem % m;
            rem /= m;
        }
        double term = dense.data[flat];
        for (Index k = 0; k < d; ++k) term *= basis.values(x[k])(idx[static_cast<std::size_t>(k)]);
        total += term;
    }
    return total;
}

// Naive gradient: each partial is a separate full left-to-right contraction with phi' in slot i.
Eigen::VectorXd naive_gradient(const TT& tt, const Basis& basis, const Eigen::VectorXd& x) {
    const Index d = tt.order();
    Eigen::VectorXd g(d);
    for (Index i = 0; i < d; ++i) {
        Eigen::RowVectorXd v = Eigen::RowVectorXd::Ones(1);
        for (Index k = 0; k < d; ++k) {
            const Eigen::VectorXd phi = k == i ? basis.derivatives(x[k]) : basis.values(x[k]);
            const auto& c = tt.core(k);
            Eigen::MatrixXd mk = Eigen::MatrixXd::Zero(c.left, c.right);
            for (Index a = 0; a < c.left; ++a)
                for (Index j = 0; j < c.modes; ++j)
                    for (Index b = 0; b < c.right; ++b) mk(a, b) += phi(j) * c(a, j, b);
            v = v * mk;
        }
        g(i) = v(0);
    }
    return g;
}

Eigen::VectorXd random_point(Index d, std::mt19937_64& rng, double lo = -2, double hi = 2) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::VectorXd x(d);
    for (Index i = 0; i < d; ++i) x(i) = u(rng);
    return x;
}

DenseTensor<double> outer(const std::vector<Eigen::VectorXd>& vs) {
    DenseTensor<double> t({1}, Eigen::VectorXd::Ones(1));
    for (const auto& v : vs) {
        t = contract(t, DenseTensor<double>({1, v.size(), 1}, v));
    }
    std::vector<Index> shape(t.shape.begin(), t.shape.end() - 1);
    return DenseTensor<double>(shape, t.data);
}

}  // namespace

TEST_CASE("contract: scalars, identity and matrix product") {
    const DenseTensor<double> a({1}, Eigen::VectorXd::Constant(1, 2.0));
    const DenseTensor<double> b({1}, Eigen::VectorXd::Constant(1, 3.0));
    const auto s = contract(a, b);
    CHECK(s.data.size() == 1);
    CHECK(s.data[0] == 6.0);

    const Eigen::Matrix3d id3 = Eigen::Matrix3d::Identity();
    Eigen::VectorXd eye = Eigen::Map<const Eigen::VectorXd>(id3.data(), 9);
    const DenseTensor<double> id({3, 3}, eye);
    const DenseTensor<double> v({3}, Eigen::Vector3d(1, -2, 5));
    CHECK(contract(id, v).data == v.data);

    std::mt19937_64 rng(1);
    std::normal_distribution<double> n(0, 1);
    Eigen::VectorXd w1(6), w2(12);
    for (auto& e : w1) e = n(rng);
    for (auto& e : w2) e = n(rng);
    const auto prod = contract(DenseTensor<double>({2, 3}, w1), DenseTensor<double>({3, 4}, w2));
    REQUIRE(prod.shape == std::vector<Index>{2, 4});
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 4; ++j) {
            double acc = 0;
            for (int k = 0; k < 3; ++k) acc += w1[i * 3 + k] * w2[k * 4 + j];
            CHECK(prod.data[i * 4 + j] == doctest::Approx(acc).epsilon(1e-14));
        }
    CHECK_THROWS_AS(contract(DenseTensor<double>({2, 3}, w1), DenseTensor<double>({4, 3}, w2)), DimensionError);
}

TEST_CASE("tensor train shape invariants") {
    auto tt = TT::zeros(4, 3, {2, 3, 2});
    CHECK(tt.core(0).left == 1);
    CHECK(tt.core(3).right == 1);
    CHECK(tt.ranks() == std::vector<Index>{2, 3, 2});
    std::vector<Core<double>> bad{Core<double>(1, 2, 2), Core<double>(3, 2, 1)};
    CHECK_THROWS_AS(TT{bad}, DimensionError);
    CHECK(feasible_ranks(4, 2, {5, 5, 5}) == std::vector<Index>{2, 4, 2});
}

TEST_CASE("tt_svd recovers exact low-rank structure") {
    std::mt19937_64 rng(5);
    std::normal_distribution<double> n(0, 1);
    auto rv = [&](int m) {
        Eigen::VectorXd v(m);
        for (auto& e : v) e = n(rng);
        return v;
    };
    SUBCASE("rank-1 outer product") {
        const auto full = outer({rv(3), rv(3), rv(3)});
        const auto tt = tt_svd(full, 0.0);
        CHECK(tt.ranks() == std::vector<Index>{1, 1});
        CHECK((to_dense(tt).data - full.data).norm() <= 1e-13 * full.data.norm());
    }
    SUBCASE("random 3x3x3 tensor") {
        const DenseTensor<double> full({3, 3, 3}, rv(27));
        const auto tt = tt_svd(full, 0.0);
        CHECK((to_dense(tt).data - full.data).norm() <= 1e-12 * full.data.norm());
    }
    SUBCASE("sum of two rank-1 tensors") {
        auto a = outer({rv(4), rv(4), rv(4)});
        const auto b = outer({rv(4), rv(4), rv(4)});
        a.data += b.data;
        const auto tt = tt_svd(a, 0.0);
        for (Index r : tt.ranks()) CHECK(r <= 2);
        CHECK((to_dense(tt).data - a.data).norm() <= 1e-12 * a.data.norm());
    }
    SUBCASE("truncation respects tolerance") {
        const DenseTensor<double> full({4, 4, 4, 4}, rv(256));
        const auto tt = tt_svd(full, 0.3);
        CHECK((to_dense(tt).data - full.data).norm() <= 0.3 * full.data.norm());
        CHECK(tt.ranks()[1] < 16);
    }
    SUBCASE("memory guard") {
        const DenseTensor<double> full({3, 3, 3}, rv(27));
        CHECK_THROWS_AS(tt_svd(full, 0.0, 10), DimensionError);
    }
}

TEST_CASE("evaluate: zero, constant and brute force") {
    const auto basis1 = build_basis(-2.0, 2.0, 1);
    auto ones = TT::zeros(3, 1, {1, 1});
    for (Index i = 0; i < 3; ++i) ones.core(i).data.setOnes();
    CHECK(evaluate(ones, basis1, Eigen::Vector3d(0.3, -1.0, 1.9)) == doctest::Approx(0.125).epsilon(1e-15));

    const auto basis2 = build_basis(-2.0, 2.0, 2);
    const auto zero = TT::zeros(3, 2, {2, 2});
    CHECK(evaluate(zero, basis2, Eigen::Vector3d(0.1, 0.2, 0.3)) == 0.0);

    std::mt19937_64 rng(9);
    const auto tt = random_tt<double>(3, 2, {2, 2}, rng);
    for (int t = 0; t < 10; ++t) {
        const auto x = random_point(3, rng);
        CHECK(std::abs(evaluate(tt, basis2, x) - brute_force_eval(tt, basis2, x)) < 1e-12);
    }
    CHECK_THROWS_AS(evaluate(tt, basis2, Eigen::Vector2d(0, 0)), DimensionError);
    CHECK_THROWS_AS(evaluate(tt, basis1, Eigen::Vector3d(0, 0, 0)), DimensionError);
}

TEST_CASE("gradient: zero, identity function and two oracles") {
    const auto basis = build_basis(-2.0, 2.0, 5);
    const auto zero = TT::zeros(4, 5, {3, 3, 3});
    CHECK(gradient(zero, basis, Eigen::Vector4d(0.1, 0.2, 0.3, 0.4)).isZero(0.0));

    // v(x) = x_1: expand x in the basis (first two functions) times the constant in other slots
    const Index d = 4;
    auto lin = TT::zeros(d, 5, {1, 1, 1});
    const Eigen::MatrixXd& c = basis.coefficients();
    // x = a*phi_1 + b*phi_2 with phi_1 = c00, phi_2 = c10 + c11 x
    const double b = 1.0 / c(1, 1), a = -b * c(1, 0) / c(0, 0);
    lin.core(0)(0, 0, 0) = a;
    lin.core(0)(0, 1, 0) = b;
    for (Index i = 1; i < d; ++i) lin.core(i)(0, 0, 0) = 1.0 / c(0, 0);
    std::mt19937_64 rng(4);
    for (int t = 0; t < 5; ++t) {
        const auto x = random_point(d, rng);
        CHECK(evaluate(lin, basis, x) == doctest::Approx(x(0)).epsilon(1e-13));
        const auto g = gradient(lin, basis, x);
        CHECK(g(0) == doctest::Approx(1.0).epsilon(1e-13));
        for (Index i = 1; i < d; ++i) CHECK(std::abs(g(i)) < 1e-13);
    }

    const auto tt = random_tt<double>(10, 5, std::vector<Index>(9, 4), rng);
    const double h = 1e-5;
    for (int t = 0; t < 5; ++t) {
        const auto x = random_point(10, rng, -1.5, 1.5);
        std::size_t count = 0;
        const auto g = gradient(tt, basis, x, &count);
        CHECK(count == 3 * 10 - 2);
        const auto gn = naive_gradient(tt, basis, x);
        CHECK((g - gn).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, gn.cwiseAbs().maxCoeff()));
        for (Index i = 0; i < 10; ++i) {
            Eigen::VectorXd xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            const double fd = (evaluate(tt, basis, xp) - evaluate(tt, basis, xm)) / (2 * h);
            CHECK(std::abs(fd - g(i)) <= 1e-6 * std::max(1.0, std::abs(g(i))));
        }
    }
}

TEST_CASE("gradient contraction count is linear in d") {
    const auto basis = build_basis(-2.0, 2.0, 3);
    std::mt19937_64 rng(2);
    for (Index d : {1, 2, 5, 17, 40}) {
        const auto tt = random_tt<double>(d, 3, std::vector<Index>(static_cast<std::size_t>(d - 1), 2), rng);
        std::size_t count = 0;
        gradient(tt, basis, Eigen::VectorXd::Constant(d, 0.3), &count);
        CHECK(count == static_cast<std::size_t>(3 * d - 2));
        CHECK(count <= static_cast<std::size_t>(3 * d));
    }
}

TEST_CASE("orthogonalize preserves the function and concentrates the norm") {
    const auto basis = build_basis(-2.0, 2.0, 3);
    std::mt19937_64 rng(12);
    const auto tt = random_tt<double>(3, 3, {2, 3}, rng);
    const double dense_norm = to_dense(tt).data.norm();
    for (Index pivot = 0; pivot < 3; ++pivot) {
        const auto canon = orthogonalize(tt, pivot);
        CHECK(std::abs(canon.core(pivot).data.norm() - dense_norm) < 1e-10);
        for (Index i = 0; i < pivot; ++i) {
            const Eigen::MatrixXd l = canon.core(i).left_unfolding();
            CHECK((l.transpose() * l - Eigen::MatrixXd::Identity(l.cols(), l.cols())).norm() < 1e-12);
        }
        for (Index i = pivot + 1; i < 3; ++i) {
            const Eigen::MatrixXd r = canon.core(i).right_unfolding();
            CHECK((r * r.transpose() - Eigen::MatrixXd::Identity(r.rows(), r.rows())).norm() < 1e-12);
        }
        for (int t = 0; t < 20; ++t) {
            const auto x = random_point(3, rng);
            CHECK(std::abs(evaluate(canon, basis, x) - evaluate(tt, basis, x)) < 1e-12);
            // applying the gauge again changes nothing beyond round-off
            const auto twice = orthogonalize(canon, pivot);
            CHECK(std::abs(evaluate(twice, basis, x) - evaluate(canon, basis, x)) < 1e-13);
        }
    }
    CHECK(frobenius_norm(tt) == doctest::Approx(dense_norm).epsilon(1e-12));
}

TEST_CASE("tt_svd of a dense reconstruction reproduces evaluations") {
    const auto basis = build_basis(-2.0, 2.0, 3);
    std::mt19937_64 rng(21);
    for (Index d = 1; d <= 5; ++d) {
        const auto tt = random_tt<double>(d, 3, std::vector<Index>(static_cast<std::size_t>(d - 1), 2), rng);
        const auto back = tt_svd(to_dense(tt), 0.0);
        for (int t = 0; t < 10; ++t) {
            const auto x = random_point(d, rng);
            CHECK(std::abs(evaluate(back, basis, x) - evaluate(tt, basis, x)) < 1e-10);
        }
        for (Index r : back.ranks()) CHECK(r <= 2);
    }
    CHECK_THROWS_AS(to_dense(random_tt<double>(8, 2, std::vector<Index>(7, 1), rng)), DimensionError);
}
