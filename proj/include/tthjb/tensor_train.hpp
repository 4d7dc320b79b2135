#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "tthjb/basis.hpp"
#include "tthjb/errors.hpp"

namespace tthjb {

using Index = Eigen::Index;

/// Three-index component tensor of shape left x modes x right, stored row-major
/// as (left, mode, right) so that both unfoldings are plain matrix views.
template <typename Scalar>
struct Core {
    using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    using Map = Eigen::Map<RowMatrix>;
    using ConstMap = Eigen::Map<const RowMatrix>;
    using SliceMap = Eigen::Map<const RowMatrix, 0, Eigen::OuterStride<>>;

    Index left = 1;
    Index modes = 1;
    Index right = 1;
    Vector data = Vector::Zero(1);

    Core() = default;
    Core(Index l, Index m, Index r) : left(l), modes(m), right(r), data(Vector::Zero(l * m * r)) {}

    Index size() const { return left * modes * right; }
    Scalar& operator()(Index a, Index k, Index b) { return data[(a * modes + k) * right + b]; }
    Scalar operator()(Index a, Index k, Index b) const { return data[(a * modes + k) * right + b]; }

    /// (left*modes) x right
    Map left_unfolding() { return Map(data.data(), left * modes, right); }
    ConstMap left_unfolding() const { return ConstMap(data.data(), left * modes, right); }
    /// left x (modes*right)
    Map right_unfolding() { return Map(data.data(), left, modes * right); }
    ConstMap right_unfolding() const { return ConstMap(data.data(), left, modes * right); }
    /// left x right matrix for a fixed mode index
    SliceMap slice(Index k) const {
        return SliceMap(data.data() + k * right, left, right, Eigen::OuterStride<>(modes * right));
    }
};

template <typename Scalar>
class TensorTrain {
public:
    using CoreType = Core<Scalar>;

    TensorTrain() = default;

    explicit TensorTrain(std::vector<CoreType> cores) : cores_(std::move(cores)) { validate(); }

    static TensorTrain zeros(Index order, Index mode_size, const std::vector<Index>& ranks) {
        if (order < 1) throw DimensionError("TensorTrain: order must be >= 1");
        if (static_cast<Index>(ranks.size()) != order - 1)
            throw DimensionError("TensorTrain: expected " + std::to_string(order - 1) + " ranks");
        std::vector<CoreType> cores;
        cores.reserve(static_cast<std::size_t>(order));
        for (Index i = 0; i < order; ++i) {
            const Index l = i == 0 ? 1 : ranks[static_cast<std::size_t>(i - 1)];
            const Index r = i == order - 1 ? 1 : ranks[static_cast<std::size_t>(i)];
            cores.emplace_back(l, mode_size, r);
        }
        return TensorTrain(std::move(cores));
    }

    Index order() const { return static_cast<Index>(cores_.size()); }
    Index mode_size() const { return cores_.empty() ? 0 : cores_.front().modes; }
    bool empty() const { return cores_.empty(); }

    /// Interior ranks (r_1, ..., r_{d-1}).
    std::vector<Index> ranks() const {
        std::vector<Index> r;
        for (std::size_t i = 0; i + 1 < cores_.size(); ++i) r.push_back(cores_[i].right);
        return r;
    }

    /// Number of stored coefficients.
    Index degrees_of_freedom() const {
        Index n = 0;
        for (const auto& c : cores_) n += c.size();
        return n;
    }

    const CoreType& core(Index i) const { return cores_[static_cast<std::size_t>(i)]; }
    CoreType& core(Index i) { return cores_[static_cast<std::size_t>(i)]; }
    const std::vector<CoreType>& cores() const { return cores_; }

    void validate() const {
        if (cores_.empty()) return;
        const Index m = cores_.front().modes;
        if (cores_.front().left != 1 || cores_.back().right != 1)
            throw DimensionError("TensorTrain: boundary ranks must be 1");
        for (std::size_t i = 0; i < cores_.size(); ++i) {
            const auto& c = cores_[i];
            if (c.modes != m) throw DimensionError("TensorTrain: mode sizes differ between cores");
            if (c.data.size() != c.size()) throw DimensionError("TensorTrain: core storage has wrong size");
            if (i + 1 < cores_.size() && c.right != cores_[i + 1].left)
                throw DimensionError("TensorTrain: adjacent core ranks disagree at core " + std::to_string(i));
        }
    }

private:
    std::vector<CoreType> cores_;
};

/// Dense tensor with row-major (last index fastest) storage.
template <typename Scalar>
struct DenseTensor {
    std::vector<Index> shape;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> data;

    DenseTensor() = default;
    DenseTensor(std::vector<Index> s, Eigen::Matrix<Scalar, Eigen::Dynamic, 1> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != element_count(shape)) throw DimensionError("DenseTensor: data size does not match shape");
    }

    static Index element_count(const std::vector<Index>& s) {
        return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<>());
    }
};

/// Contracts the last index of w1 with the first index of w2.
template <typename Scalar>
DenseTensor<Scalar> contract(const DenseTensor<Scalar>& w1, const DenseTensor<Scalar>& w2) {
    using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    if (w1.shape.empty() || w2.shape.empty() || w1.shape.back() != w2.shape.front())
        throw DimensionError("contract: last dimension of w1 must equal first dimension of w2");
    const Index k = w1.shape.back();
    const Index rows = w1.data.size() / k;
    const Index cols = w2.data.size() / k;
    std::vector<Index> shape(w1.shape.begin(), w1.shape.end() - 1);
    shape.insert(shape.end(), w2.shape.begin() + 1, w2.shape.end());
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> out(rows * cols);
    Eigen::Map<RowMatrix>(out.data(), rows, cols).noalias() =
        Eigen::Map<const RowMatrix>(w1.data.data(), rows, k) * Eigen::Map<const RowMatrix>(w2.data.data(), k, cols);
    return DenseTensor<Scalar>(std::move(shape), std::move(out));
}

/// Default limit for dense reconstructions (number of modes).
inline constexpr Index kMaxDenseOrder = 6;
/// Default element limit accepted by tt_svd.
inline constexpr Index kMaxDenseElements = Index{1} << 26;

/// Full coefficient tensor of a TT; refuses orders above max_order.
template <typename Scalar>
DenseTensor<Scalar> to_dense(const TensorTrain<Scalar>& tt, Index max_order = kMaxDenseOrder) {
    if (tt.order() > max_order) throw DimensionError("to_dense: order exceeds dense reconstruction limit");
    DenseTensor<Scalar> acc({1, tt.core(0).modes, tt.core(0).right}, tt.core(0).data);
    for (Index i = 1; i < tt.order(); ++i) {
        const auto& c = tt.core(i);
        acc = contract(acc, DenseTensor<Scalar>({c.left, c.modes, c.right}, c.data));
    }
    std::vector<Index> shape(acc.shape.begin() + 1, acc.shape.end() - 1);
    return DenseTensor<Scalar>(std::move(shape), std::move(acc.data));
}

/// TT-SVD: successive truncated SVDs of the unfoldings. The per-step truncation
/// threshold tol/sqrt(d-1) * ||full||_F bounds the total relative error by tol;
/// singular values at round-off level relative to the leading one are always dropped.
template <typename Scalar>
TensorTrain<Scalar> tt_svd(const DenseTensor<Scalar>& full, Scalar tol, Index max_elements = kMaxDenseElements) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Index d = static_cast<Index>(full.shape.size());
    if (d < 1) throw DimensionError("tt_svd: tensor must have at least one mode");
    const Index m = full.shape.front();
    for (Index s : full.shape)
        if (s != m) throw DimensionError("tt_svd: all modes must have the same size");
    if (full.data.size() > max_elements) throw DimensionError("tt_svd: dense tensor exceeds the memory guard");
    if (tol < 0) throw std::invalid_argument("tt_svd: tolerance must be non-negative");

    const Scalar norm = full.data.norm();
    const Scalar step_tol = d > 1 ? tol * norm / std::sqrt(Scalar(d - 1)) : Scalar(0);
    const Scalar noise = Scalar(64) * std::numeric_limits<Scalar>::epsilon();

    std::vector<Core<Scalar>> cores;
    RowMatrix rest = Eigen::Map<const RowMatrix>(full.data.data(), 1, full.data.size());
    Index left = 1;
    for (Index i = 0; i + 1 < d; ++i) {
        const Index cols = rest.size() / (left * m);
        const Matrix unfolding = Eigen::Map<const RowMatrix>(rest.data(), left * m, cols);
        Eigen::BDCSVD<Matrix> svd(unfolding, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const auto& sv = svd.singularValues();
        Index rank = sv.size();
        // drop the tail while its norm stays below the step threshold
        Scalar tail = 0;
        while (rank > 1) {
            const Scalar next = tail + sv(rank - 1) * sv(rank - 1);
            const bool tiny = sv(rank - 1) <= noise * sv(0);
            if (!tiny && std::sqrt(next) > step_tol) break;
            tail = next;
            --rank;
        }
        if (sv.size() == 0 || sv(0) == Scalar(0)) rank = 1;
        Core<Scalar> core(left, m, rank);
        core.left_unfolding() = svd.matrixU().leftCols(rank);
        cores.push_back(std::move(core));
        const RowMatrix next = sv.head(rank).asDiagonal() * svd.matrixV().leftCols(rank).transpose();
        rest = Eigen::Map<const RowMatrix>(next.data(), 1, next.size());
        left = rank;
    }
    Core<Scalar> last(left, m, 1);
    last.data = Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>(rest.data(), rest.size());
    cores.push_back(std::move(last));
    return TensorTrain<Scalar>(std::move(cores));
}

namespace detail {

template <typename Scalar>
void check_point(const TensorTrain<Scalar>& tt, const BasisSet<Scalar>& basis, Index n) {
    if (tt.empty()) throw DimensionError("tensor train is empty");
    if (n != tt.order()) throw DimensionError("point dimension does not match tensor train order");
    if (basis.size() != tt.mode_size()) throw DimensionError("basis size does not match tensor train mode size");
}

// out = v * sum_k phi[k] * slice_k   (row vector times mode-weighted core)
template <typename Scalar, typename Phi>
void left_step(const Core<Scalar>& c, const Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& v, const Phi& phi,
               Eigen::Matrix<Scalar, 1, Eigen::Dynamic>& out) {
    out.setZero(c.right);
    for (Index a = 0; a < c.left; ++a) {
        const Scalar va = v[a];
        if (va == Scalar(0)) continue;
        for (Index k = 0; k < c.modes; ++k) {
            const Scalar w = va * phi[k];
            const Scalar* row = c.data.data() + (a * c.modes + k) * c.right;
            for (Index b = 0; b < c.right; ++b) out[b] += w * row[b];
        }
    }
}

// out = sum_k phi[k] * slice_k * v   (mode-weighted core times column vector)
template <typename Scalar, typename Phi>
void right_step(const Core<Scalar>& c, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v, const Phi& phi,
                Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& out) {
    out.setZero(c.left);
    for (Index a = 0; a < c.left; ++a) {
        Scalar acc = 0;
        for (Index k = 0; k < c.modes; ++k) {
            const Scalar* row = c.data.data() + (a * c.modes + k) * c.right;
            Scalar dot = 0;
            for (Index b = 0; b < c.right; ++b) dot += row[b] * v[b];
            acc += phi[k] * dot;
        }
        out[a] = acc;
    }
}

}  // namespace detail

/// v(x) = u_1 o ... o u_d o phi(x_d) o ... o phi(x_1), contracted left to right.
template <typename Scalar, typename Point>
Scalar evaluate(const TensorTrain<Scalar>& tt, const BasisSet<Scalar>& basis, const Point& x) {
    detail::check_point(tt, basis, static_cast<Index>(x.size()));
    Eigen::Matrix<Scalar, 1, Eigen::Dynamic> v(1), next;
    v[0] = 1;
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> phi(basis.size());
    for (Index i = 0; i < tt.order(); ++i) {
        basis.values_into(x[i], phi);
        detail::left_step(tt.core(i), v, phi, next);
        v.swap(next);
    }
    return v[0];
}

/// Partial contractions used by the fast gradient. psi_minus[i] contracts cores
/// before i (row vector of length r_{i-1}), psi_plus[i] contracts cores after i
/// (column vector of length r_i). psi_minus[0] and psi_plus[d-1] are the scalar 1.
template <typename Scalar>
struct PsiCache {
    std::vector<Eigen::Matrix<Scalar, 1, Eigen::Dynamic>> psi_minus;
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> psi_plus;
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> phi;
    std::vector<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>> dphi;
    /// Core-level contractions performed so far.
    std::size_t contractions = 0;
};

/// Fills psi_minus by a left sweep and psi_plus by a right sweep (2d-2 contractions).
template <typename Scalar, typename Point>
PsiCache<Scalar> psi_cache(const TensorTrain<Scalar>& tt, const BasisSet<Scalar>& basis, const Point& x) {
    detail::check_point(tt, basis, static_cast<Index>(x.size()));
    const Index d = tt.order();
    const auto n = static_cast<std::size_t>(d);
    PsiCache<Scalar> cache;
    cache.phi.resize(n);
    cache.dphi.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        cache.phi[i] = basis.values(x[static_cast<Index>(i)]);
        cache.dphi[i] = basis.derivatives(x[static_cast<Index>(i)]);
    }
    cache.psi_minus.resize(n);
    cache.psi_plus.resize(n);
    cache.psi_minus[0] = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>::Ones(1);
    for (std::size_t i = 1; i < n; ++i) {
        detail::left_step(tt.core(static_cast<Index>(i - 1)), cache.psi_minus[i - 1], cache.phi[i - 1],
                          cache.psi_minus[i]);
        ++cache.contractions;
    }
    cache.psi_plus[n - 1] = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Ones(1);
    for (std::size_t i = n - 1; i > 0; --i) {
        detail::right_step(tt.core(static_cast<Index>(i)), cache.psi_plus[i], cache.phi[i], cache.psi_plus[i - 1]);
        ++cache.contractions;
    }
    return cache;
}

/// Gradient in O(d m r^2): two sweeps fill the cache, one pass assembles
/// dv/dx_i = psi_minus[i] * (sum_k phi'_k(x_i) slice_k) * psi_plus[i].
template <typename Scalar, typename Point>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> gradient(const TensorTrain<Scalar>& tt, const BasisSet<Scalar>& basis,
                                                   const Point& x, std::size_t* contractions = nullptr) {
    PsiCache<Scalar> cache = psi_cache(tt, basis, x);
    const Index d = tt.order();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad(d), tmp;
    for (Index i = d - 1; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        detail::right_step(tt.core(i), cache.psi_plus[ui], cache.dphi[ui], tmp);
        grad[i] = cache.psi_minus[ui].dot(tmp.transpose());
        ++cache.contractions;
    }
    if (contractions) *contractions = cache.contractions;
    return grad;
}

/// Mixed-canonical gauge: cores left of pivot become left-orthogonal, cores right
/// of pivot right-orthogonal. Ranks shrink only where they exceed what the
/// neighbouring unfolding can carry.
template <typename Scalar>
TensorTrain<Scalar> orthogonalize(TensorTrain<Scalar> tt, Index pivot) {
    using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
    using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
    const Index d = tt.order();
    if (pivot < 0 || pivot >= d) throw std::out_of_range("orthogonalize: pivot out of range");

    for (Index i = 0; i < pivot; ++i) {
        auto& c = tt.core(i);
        auto& nxt = tt.core(i + 1);
        const Matrix unf = c.left_unfolding();
        Eigen::HouseholderQR<Matrix> qr(unf);
        const Index k = std::min(unf.rows(), unf.cols());
        const Matrix q = qr.householderQ() * Matrix::Identity(unf.rows(), k);
        const Matrix r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
        Core<Scalar> nc(c.left, c.modes, k);
        nc.left_unfolding() = q;
        const RowMatrix merged = r * nxt.right_unfolding();
        Core<Scalar> nn(k, nxt.modes, nxt.right);
        nn.right_unfolding() = merged;
        c = std::move(nc);
        nxt = std::move(nn);
    }
    for (Index i = d - 1; i > pivot; --i) {
        auto& c = tt.core(i);
        auto& prv = tt.core(i - 1);
        const Matrix unf_t = c.right_unfolding().transpose();
        Eigen::HouseholderQR<Matrix> qr(unf_t);
        const Index k = std::min(unf_t.rows(), unf_t.cols());
        const Matrix q = qr.householderQ() * Matrix::Identity(unf_t.rows(), k);
        const Matrix r = qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>();
        Core<Scalar> nc(k, c.modes, c.right);
        nc.right_unfolding() = q.transpose();
        const RowMatrix merged = prv.left_unfolding() * r.transpose();
        Core<Scalar> np(prv.left, prv.modes, k);
        np.left_unfolding() = merged;
        c = std::move(nc);
        prv = std::move(np);
    }
    tt.validate();
    return tt;
}

/// Frobenius norm of the full coefficient tensor (computed in canonical form).
template <typename Scalar>
Scalar frobenius_norm(const TensorTrain<Scalar>& tt) {
    const auto canon = orthogonalize(tt, tt.order() - 1);
    return canon.core(canon.order() - 1).data.norm();
}

/// Caps each interior rank at what the adjacent unfoldings can hold
/// (r_i <= m * r_{i-1} and r_i <= m * r_{i+1}).
inline std::vector<Index> feasible_ranks(Index order, Index mode_size, std::vector<Index> ranks) {
    if (static_cast<Index>(ranks.size()) != order - 1)
        throw DimensionError("feasible_ranks: expected " + std::to_string(order - 1) + " ranks");
    Index prev = 1;
    for (auto& r : ranks) {
        r = std::max<Index>(1, std::min(r, prev * mode_size));
        prev = r;
    }
    Index next = 1;
    for (auto it = ranks.rbegin(); it != ranks.rend(); ++it) {
        *it = std::min(*it, next * mode_size);
        next = *it;
    }
    return ranks;
}

/// TT with i.i.d. normal entries scaled by 1/sqrt(left*modes).
template <typename Scalar, typename Rng>
TensorTrain<Scalar> random_tt(Index order, Index mode_size, const std::vector<Index>& ranks, Rng& rng) {
    auto tt = TensorTrain<Scalar>::zeros(order, mode_size, ranks);
    std::normal_distribution<Scalar> normal(0, 1);
    for (Index i = 0; i < order; ++i) {
        auto& c = tt.core(i);
        const Scalar scale = Scalar(1) / std::sqrt(Scalar(c.left * c.modes));
        for (Index e = 0; e < c.data.size(); ++e) c.data[e] = scale * normal(rng);
    }
    return tt;
}

using TT = TensorTrain<double>;

}  // namespace tthjb
