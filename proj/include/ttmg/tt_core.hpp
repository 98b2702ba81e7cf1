#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"

namespace ttmg {

/// Relative cutoff below which singular values are treated as numerical noise
/// and discarded, irrespective of the requested tolerance.
inline constexpr double kNoiseCutoff = 1e-14;

/// How aggressively a rounding step may compress.  Whichever of the two limits
/// is more restrictive wins.
struct TruncationPolicy {
    double rel_tolerance = 0.0;
    Index max_rank = std::numeric_limits<Index>::max();

    static TruncationPolicy exact() { return {}; }
    static TruncationPolicy tolerance(double eps) { return {eps, std::numeric_limits<Index>::max()}; }
    static TruncationPolicy capped(double eps, Index rank) { return {eps, rank}; }

    void validate() const {
        require(rel_tolerance >= 0.0 && std::isfinite(rel_tolerance),
                "truncation tolerance must be finite and nonnegative");
        require(max_rank >= 1, "truncation rank cap must be at least 1");
    }
};

/// A J-way tensor in Tensor-Train format.
///
/// Core k is stored as its left unfolding, an (r_{k-1} n_k) × r_k column-major
/// matrix with entry (a, i, b) at row a + r_{k-1} i.  The same buffer read as an
/// r_{k-1} × (n_k r_k) matrix is the right unfolding.  Values are immutable once
/// constructed; every operation returns a new tensor.
class TTVector {
public:
    TTVector() = default;

    TTVector(std::vector<Index> dims, std::vector<Matrix> cores)
        : dims_(std::move(dims)), cores_(std::move(cores)) {
        require(!dims_.empty(), "TT tensor needs at least one mode");
        require(dims_.size() == cores_.size(), "TT tensor: one core per mode required");
        Index left = 1;
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            require(dims_[k] >= 1, "TT tensor: mode sizes must be positive");
            require(cores_[k].cols() >= 1, "TT tensor: ranks must be positive");
            require(cores_[k].rows() == left * dims_[k],
                    "TT tensor: core " + std::to_string(k) + " does not chain with its predecessor");
            left = cores_[k].cols();
        }
        require(left == 1, "TT tensor: trailing rank must be 1");
    }

    static TTVector zeros(const std::vector<Index>& dims) {
        std::vector<Matrix> cores;
        for (auto n : dims) cores.push_back(Matrix::Zero(n, 1));
        return {dims, std::move(cores)};
    }

    static TTVector ones(const std::vector<Index>& dims) {
        std::vector<Matrix> cores;
        for (auto n : dims) cores.push_back(Matrix::Ones(n, 1));
        return {dims, std::move(cores)};
    }

    Index order() const { return static_cast<Index>(dims_.size()); }
    const std::vector<Index>& dims() const { return dims_; }
    Index dim(Index k) const { return dims_[static_cast<std::size_t>(k)]; }
    bool empty() const { return dims_.empty(); }

    /// r_k for k = 0..J.
    Index rank(Index k) const {
        if (k == 0) return 1;
        return cores_[static_cast<std::size_t>(k - 1)].cols();
    }

    std::vector<Index> ranks() const {
        std::vector<Index> r(dims_.size() + 1);
        for (Index k = 0; k <= order(); ++k) r[static_cast<std::size_t>(k)] = rank(k);
        return r;
    }

    Index max_rank() const {
        Index m = 1;
        for (const auto& c : cores_) m = std::max(m, c.cols());
        return m;
    }

    const Matrix& core(Index k) const { return cores_[static_cast<std::size_t>(k)]; }
    const std::vector<Matrix>& cores() const { return cores_; }

    Eigen::Map<const Matrix> right_unfolding(Index k) const {
        const auto& c = core(k);
        return {c.data(), rank(k), dim(k) * c.cols()};
    }

    /// Number of stored core entries.
    Index storage() const {
        Index s = 0;
        for (const auto& c : cores_) s += c.size();
        return s;
    }

    /// Entry via the chained slice product G_1(i_1) ··· G_J(i_J).
    double entry(const std::vector<Index>& idx) const {
        require(idx.size() == dims_.size(), "entry: index arity mismatch");
        Eigen::RowVectorXd row = Eigen::RowVectorXd::Ones(1);
        for (Index k = 0; k < order(); ++k) {
            const Index r0 = rank(k);
            const Index n = dim(k);
            const auto i = idx[static_cast<std::size_t>(k)];
            require(i >= 0 && i < n, "entry: index out of range");
            Eigen::Map<const Matrix, 0, Eigen::OuterStride<>> slice(core(k).data() + r0 * i, r0,
                                                                    rank(k + 1),
                                                                    Eigen::OuterStride<>(r0 * n));
            row = row * slice;
        }
        return row(0);
    }

private:
    std::vector<Index> dims_;
    std::vector<Matrix> cores_;
};

namespace detail {

/// Reinterpret an r0 × (n r1) right unfolding as an (r0 n) × r1 core.
inline Matrix fold_right(const Matrix& m, Index n, Index r1) {
    return Eigen::Map<const Matrix>(m.data(), m.rows() * n, r1);
}

inline Index choose_rank(const Vector& s, double delta, Index max_rank) {
    Index r = s.size();
    if (r == 0) return 0;
    const double smax = s(0);
    if (smax == 0.0) return 1;
    while (r > 1 && s(r - 1) <= kNoiseCutoff * smax) --r;
    double tail2 = 0.0;
    while (r > 1) {
        const double t = tail2 + s(r - 1) * s(r - 1);
        if (t > delta * delta) break;
        tail2 = t;
        --r;
    }
    return std::min(r, max_rank);
}

struct TruncatedSvd {
    Matrix u;        // rows × r, orthonormal columns
    Matrix svt;      // r × cols, Σ Vᵀ
    double discarded = 0.0;  // Frobenius norm of the dropped part
};

inline TruncatedSvd truncated_svd(const Matrix& m, double delta, Index max_rank) {
    const Index rows = m.rows();
    const Index cols = m.cols();
    TruncatedSvd out;
    if (rows >= cols) {
        Eigen::HouseholderQR<Matrix> qr(m);
        Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
        Eigen::BDCSVD<Matrix> svd(r, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vector& s = svd.singularValues();
        const Index k = choose_rank(s, delta, max_rank);
        out.u = Matrix::Zero(rows, k);
        out.u.topRows(cols) = svd.matrixU().leftCols(k);
        out.u.applyOnTheLeft(qr.householderQ());
        out.svt = s.head(k).asDiagonal() * svd.matrixV().leftCols(k).transpose();
        out.discarded = s.tail(s.size() - k).norm();
    } else {
        Matrix mt = m.transpose();
        auto t = truncated_svd(mt, delta, max_rank);
        // m = (U_t Σ V_tᵀ)ᵀ = V_t Σ U_tᵀ; split Σ onto the right factor.
        const Index k = t.u.cols();
        Matrix v = t.svt.transpose();  // cols_t × k = V_t Σ
        Vector s = v.colwise().norm().transpose();
        out.u = v;
        for (Index j = 0; j < k; ++j) {
            if (s(j) > 0.0) out.u.col(j) /= s(j);
        }
        out.svt = s.asDiagonal() * t.u.transpose();
        out.discarded = t.discarded;
    }
    return out;
}

/// New core with the mode index mapped through `e` (m × n): Y(a,i,b) = Σ_j e(i,j) X(a,j,b).
inline Matrix apply_to_mode(const Matrix& core, Index r0, Index n, const Matrix& e) {
    const Index r1 = core.cols();
    const Index m = e.rows();
    Matrix out(r0 * m, r1);
    for (Index b = 0; b < r1; ++b) {
        Eigen::Map<const Matrix> xb(core.data() + b * r0 * n, r0, n);
        Eigen::Map<Matrix> yb(out.data() + b * r0 * m, r0, m);
        yb.noalias() = xb * e.transpose();
    }
    return out;
}

/// Reorder a mode-0-fastest buffer into Kronecker (mode-0-slowest) order.
inline Vector to_kronecker_order(const Vector& v, const std::vector<Index>& dims) {
    const Index total = v.size();
    Vector out(total);
    const std::size_t J = dims.size();
    std::vector<Index> idx(J, 0);
    std::vector<Index> stride(J, 1);  // strides in the mode-0-fastest buffer
    for (std::size_t k = 1; k < J; ++k) stride[k] = stride[k - 1] * dims[k - 1];
    Index src = 0;
    for (Index lin = 0; lin < total; ++lin) {
        out(lin) = v(src);
        for (std::size_t k = J; k-- > 0;) {
            if (++idx[k] < dims[k]) {
                src += stride[k];
                break;
            }
            src -= (dims[k] - 1) * stride[k];
            idx[k] = 0;
        }
    }
    return out;
}

inline Vector from_kronecker_order(const Vector& v, const std::vector<Index>& dims) {
    const Index total = v.size();
    Vector out(total);
    const std::size_t J = dims.size();
    std::vector<Index> idx(J, 0);
    std::vector<Index> stride(J, 1);
    for (std::size_t k = 1; k < J; ++k) stride[k] = stride[k - 1] * dims[k - 1];
    Index dst = 0;
    for (Index lin = 0; lin < total; ++lin) {
        out(dst) = v(lin);
        for (std::size_t k = J; k-- > 0;) {
            if (++idx[k] < dims[k]) {
                dst += stride[k];
                break;
            }
            dst -= (dims[k] - 1) * stride[k];
            idx[k] = 0;
        }
    }
    return out;
}

/// Right-to-left sweep leaving cores 1..J-1 right-orthonormal.
inline std::vector<Matrix> orthogonalize_right(const TTVector& x) {
    std::vector<Matrix> cores = x.cores();
    const Index J = x.order();
    for (Index k = J - 1; k >= 1; --k) {
        auto& ck = cores[static_cast<std::size_t>(k)];
        const Index r1 = ck.cols();
        const Index n = x.dim(k);
        const Index r0 = ck.rows() / n;
        Matrix mt = Eigen::Map<const Matrix>(ck.data(), r0, n * r1).transpose();
        Eigen::HouseholderQR<Matrix> qr(mt);
        const Index rnew = std::min(r0, n * r1);
        Matrix q = qr.householderQ() * Matrix::Identity(n * r1, rnew);
        Matrix r = qr.matrixQR().topRows(rnew).triangularView<Eigen::Upper>();
        Matrix qt = q.transpose();
        ck = fold_right(qt, n, r1);
        auto& prev = cores[static_cast<std::size_t>(k - 1)];
        prev = prev * r.transpose();
    }
    return cores;
}

}  // namespace detail

/// Rank-1 tensor from J factor vectors (vec ordering: first factor slowest).
inline TTVector from_elementary(const std::vector<Vector>& factors) {
    require(!factors.empty(), "from_elementary: factor list is empty");
    std::vector<Index> dims;
    std::vector<Matrix> cores;
    for (const auto& f : factors) {
        require(f.size() >= 1, "from_elementary: empty factor");
        dims.push_back(f.size());
        cores.emplace_back(f);
    }
    return {std::move(dims), std::move(cores)};
}

/// Dense vector in Kronecker order.
inline Vector to_full(const TTVector& x, double limit = kDefaultFullLimit) {
    if (product(x.dims()) > limit) throw SizeLimitError("to_full: tensor exceeds dense size limit");
    // Contract left to right in mode-0-fastest order, then reorder.
    Matrix t = x.core(0);  // n_0 × r_1
    Index rows = x.dim(0);
    for (Index k = 1; k < x.order(); ++k) {
        Matrix next = t * x.right_unfolding(k);  // rows × (n_k r_{k+1})
        rows *= x.dim(k);
        t = Eigen::Map<const Matrix>(next.data(), rows, x.rank(k + 1));
    }
    Vector v = Eigen::Map<const Vector>(t.data(), rows);
    return detail::to_kronecker_order(v, x.dims());
}

/// TT-SVD of a dense tensor given in Kronecker order.
inline TTVector from_full(const Vector& v, const std::vector<Index>& dims,
                          const TruncationPolicy& policy = TruncationPolicy::exact()) {
    policy.validate();
    require(!dims.empty(), "from_full: no modes");
    require(product(dims) == static_cast<double>(v.size()), "from_full: size does not match shape");
    if (product(dims) > kDefaultFullLimit) throw SizeLimitError("from_full: tensor exceeds dense size limit");
    const auto J = static_cast<Index>(dims.size());
    if (J == 1) return TTVector(dims, {Matrix(v)});
    const double delta = policy.rel_tolerance * v.norm() / std::sqrt(static_cast<double>(J - 1));
    Vector w = detail::from_kronecker_order(v, dims);
    std::vector<Matrix> cores;
    Matrix c = Eigen::Map<const Matrix>(w.data(), dims[0], w.size() / dims[0]);
    Index left = 1;
    for (Index k = 0; k + 1 < J; ++k) {
        const Index n = dims[static_cast<std::size_t>(k)];
        Matrix unf = Eigen::Map<const Matrix>(c.data(), left * n, c.size() / (left * n));
        auto svd = detail::truncated_svd(unf, delta, policy.max_rank);
        cores.push_back(std::move(svd.u));
        left = svd.svt.rows();
        c = std::move(svd.svt);
    }
    cores.push_back(Eigen::Map<const Matrix>(c.data(), c.size(), 1));
    return {dims, std::move(cores)};
}

/// Sum with block-structured cores; internal ranks add, no arithmetic.
inline TTVector add(const TTVector& x, const TTVector& y) {
    require(x.dims() == y.dims(), "add: dimension mismatch");
    const Index J = x.order();
    if (J == 1) return TTVector(x.dims(), {Matrix(x.core(0) + y.core(0))});
    std::vector<Matrix> cores;
    for (Index k = 0; k < J; ++k) {
        const Index n = x.dim(k);
        const Index rx0 = x.rank(k), rx1 = x.rank(k + 1);
        const Index ry0 = y.rank(k), ry1 = y.rank(k + 1);
        const Index r0 = (k == 0) ? 1 : rx0 + ry0;
        const Index r1 = (k == J - 1) ? 1 : rx1 + ry1;
        Matrix c = Matrix::Zero(r0 * n, r1);
        const Index yrow = (k == 0) ? 0 : rx0;
        const Index ycol = (k == J - 1) ? 0 : rx1;
        for (Index i = 0; i < n; ++i) {
            // slice i of the new core is rows {a + r0 i}
            for (Index b = 0; b < rx1; ++b)
                for (Index a = 0; a < rx0; ++a) c(a + r0 * i, b) += x.core(k)(a + rx0 * i, b);
            for (Index b = 0; b < ry1; ++b)
                for (Index a = 0; a < ry0; ++a) c(yrow + a + r0 * i, ycol + b) += y.core(k)(a + ry0 * i, b);
        }
        cores.push_back(std::move(c));
    }
    return {x.dims(), std::move(cores)};
}

/// α·x; only the first core is touched so ranks are unchanged.
inline TTVector scale(const TTVector& x, double alpha) {
    std::vector<Matrix> cores = x.cores();
    cores[0] *= alpha;
    return {x.dims(), std::move(cores)};
}

inline TTVector subtract(const TTVector& x, const TTVector& y) { return add(x, scale(y, -1.0)); }

/// Euclidean inner product by a left-to-right sweep contraction.
inline double dot(const TTVector& x, const TTVector& y) {
    require(x.dims() == y.dims(), "dot: dimension mismatch");
    Matrix phi = Matrix::Ones(1, 1);
    for (Index k = 0; k < x.order(); ++k) {
        const Index n = x.dim(k);
        Matrix w = phi * y.right_unfolding(k);  // rx0 × (n ry1)
        Eigen::Map<const Matrix> wl(w.data(), x.rank(k) * n, y.rank(k + 1));
        phi = x.core(k).transpose() * wl;
    }
    return phi(0, 0);
}

/// 2-norm computed from a QR sweep (no cancellation from the Gram form).
inline double norm(const TTVector& x) {
    Matrix r = Matrix::Ones(1, 1);
    for (Index k = 0; k < x.order(); ++k) {
        const Index n = x.dim(k);
        const Index r1 = x.rank(k + 1);
        Matrix m = r * x.right_unfolding(k);
        Eigen::Map<const Matrix> ml(m.data(), r.rows() * n, r1);
        if (ml.rows() >= r1) {
            Eigen::HouseholderQR<Matrix> qr(ml);
            r = qr.matrixQR().topRows(r1).triangularView<Eigen::Upper>();
        } else {
            r = ml;
        }
    }
    return r.norm();
}

/// 1ᵀ vec(x).
inline double sum(const TTVector& x) {
    Eigen::RowVectorXd phi = Eigen::RowVectorXd::Ones(1);
    for (Index k = 0; k < x.order(); ++k) {
        const Index r0 = x.rank(k), n = x.dim(k), r1 = x.rank(k + 1);
        Matrix s = Matrix::Zero(r0, r1);
        for (Index i = 0; i < n; ++i)
            s += Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>(x.core(k).data() + r0 * i, r0, r1,
                                                                   Eigen::OuterStride<>(r0 * n));
        phi = phi * s;
    }
    return phi(0);
}

/// TT rounding: right-to-left orthogonalization, then a left-to-right sweep of
/// truncated SVDs with per-step budget ε‖x‖/√(J−1).
inline TTVector round(const TTVector& x, const TruncationPolicy& policy) {
    policy.validate();
    const Index J = x.order();
    if (J == 1) return x;
    auto cores = detail::orthogonalize_right(x);
    const double nrm = cores[0].norm();
    if (nrm == 0.0 || !std::isfinite(nrm)) {
        require(std::isfinite(nrm), "round: tensor contains non-finite entries");
        return TTVector::zeros(x.dims());
    }
    const double delta = policy.rel_tolerance * nrm / std::sqrt(static_cast<double>(J - 1));
    for (Index k = 0; k + 1 < J; ++k) {
        auto& ck = cores[static_cast<std::size_t>(k)];
        auto svd = detail::truncated_svd(ck, delta, policy.max_rank);
        ck = std::move(svd.u);
        auto& next = cores[static_cast<std::size_t>(k + 1)];
        const Index n = x.dim(k + 1);
        const Index r1 = next.cols();
        const Index r0 = next.rows() / n;
        Matrix m = svd.svt * Eigen::Map<const Matrix>(next.data(), r0, n * r1);
        next = detail::fold_right(m, n, r1);
    }
    return {x.dims(), std::move(cores)};
}

/// Uniform rank with the same core storage as x.
inline double effective_rank(const TTVector& x) {
    const Index J = x.order();
    require(J >= 2, "effective_rank: needs at least two modes");
    const double s = static_cast<double>(x.storage());
    double a = 0.0;
    for (Index k = 1; k + 1 < J; ++k) a += static_cast<double>(x.dim(k));
    const double b = static_cast<double>(x.dim(0) + x.dim(J - 1));
    if (a == 0.0) return s / b;
    return (-b + std::sqrt(b * b + 4.0 * a * s)) / (2.0 * a);
}

/// Apply one matrix per mode (a rank-1 Kronecker operator); ranks are preserved.
/// The coefficient is folded into the first core.
inline TTVector apply_modewise(const TTVector& x, const std::vector<Matrix>& mats, double coeff = 1.0) {
    require(static_cast<Index>(mats.size()) == x.order(), "apply_modewise: one matrix per mode required");
    std::vector<Index> dims;
    std::vector<Matrix> cores;
    for (Index k = 0; k < x.order(); ++k) {
        const auto& e = mats[static_cast<std::size_t>(k)];
        require(e.cols() == x.dim(k), "apply_modewise: factor column count does not match mode size");
        dims.push_back(e.rows());
        cores.push_back(detail::apply_to_mode(x.core(k), x.rank(k), x.dim(k), e));
    }
    cores[0] *= coeff;
    return {std::move(dims), std::move(cores)};
}

/// Elementwise product; TT ranks multiply.  Combined rank index is α + r_x·a.
inline TTVector hadamard(const TTVector& x, const TTVector& y) {
    require(x.dims() == y.dims(), "hadamard: shape mismatch");
    std::vector<Matrix> cores;
    for (Index k = 0; k < x.order(); ++k) {
        const Index n = x.dim(k);
        const Index rx0 = x.rank(k), rx1 = x.rank(k + 1), ry0 = y.rank(k), ry1 = y.rank(k + 1);
        const Index r0 = rx0 * ry0;
        Matrix out(r0 * n, rx1 * ry1);
        const auto& xc = x.core(k);
        const auto& yc = y.core(k);
        for (Index b = 0; b < ry1; ++b)
            for (Index beta = 0; beta < rx1; ++beta)
                for (Index i = 0; i < n; ++i)
                    for (Index a = 0; a < ry0; ++a)
                        for (Index alpha = 0; alpha < rx0; ++alpha)
                            out(alpha + rx0 * a + r0 * i, beta + rx1 * b) = xc(alpha + rx0 * i, beta) * yc(a + ry0 * i, b);
        cores.push_back(std::move(out));
    }
    return {x.dims(), std::move(cores)};
}

/// An operator in TT-matrix format.  Core k has shape (r_{k-1}, m_k, n_k, r_k) and
/// is stored like a TTVector core over the combined index i + m_k j.
class TTMatrix {
public:
    TTMatrix() = default;

    TTMatrix(std::vector<Index> row_dims, std::vector<Index> col_dims, std::vector<Matrix> cores)
        : rows_(std::move(row_dims)), cols_(std::move(col_dims)) {
        require(rows_.size() == cols_.size(), "TT matrix: row/column mode counts differ");
        std::vector<Index> combined;
        for (std::size_t k = 0; k < rows_.size(); ++k) combined.push_back(rows_[k] * cols_[k]);
        data_ = TTVector(std::move(combined), std::move(cores));
    }

    /// Rank-1 operator coeff · (F_1 ⊗ ··· ⊗ F_J).
    static TTMatrix kronecker(const std::vector<Matrix>& factors, double coeff = 1.0) {
        require(!factors.empty(), "TT matrix: no factors");
        std::vector<Index> rows, cols;
        std::vector<Matrix> cores;
        for (const auto& f : factors) {
            rows.push_back(f.rows());
            cols.push_back(f.cols());
            cores.push_back(Eigen::Map<const Matrix>(f.data(), f.size(), 1));
        }
        cores[0] *= coeff;
        return {std::move(rows), std::move(cols), std::move(cores)};
    }

    static TTMatrix identity(const std::vector<Index>& dims) {
        std::vector<Matrix> f;
        for (auto n : dims) f.push_back(Matrix::Identity(n, n));
        return kronecker(f);
    }

    Index order() const { return data_.order(); }
    const std::vector<Index>& row_dims() const { return rows_; }
    const std::vector<Index>& col_dims() const { return cols_; }
    Index rank(Index k) const { return data_.rank(k); }
    std::vector<Index> ranks() const { return data_.ranks(); }
    Index max_rank() const { return data_.max_rank(); }
    const Matrix& core(Index k) const { return data_.core(k); }
    const TTVector& as_vector() const { return data_; }

    /// Slice M_k(i, j) as an r_{k-1} × r_k matrix.
    Matrix slice(Index k, Index i, Index j) const {
        const Index r0 = rank(k), m = rows_[static_cast<std::size_t>(k)];
        const Index mn = m * cols_[static_cast<std::size_t>(k)];
        return Eigen::Map<const Matrix, 0, Eigen::OuterStride<>>(core(k).data() + r0 * (i + m * j), r0,
                                                                 rank(k + 1), Eigen::OuterStride<>(r0 * mn));
    }

    static TTMatrix from_vector(std::vector<Index> row_dims, std::vector<Index> col_dims, const TTVector& v) {
        return {std::move(row_dims), std::move(col_dims), v.cores()};
    }

private:
    std::vector<Index> rows_, cols_;
    TTVector data_;
};

inline TTMatrix add(const TTMatrix& a, const TTMatrix& b) {
    require(a.row_dims() == b.row_dims() && a.col_dims() == b.col_dims(), "add: TT matrix shape mismatch");
    return TTMatrix::from_vector(a.row_dims(), a.col_dims(), add(a.as_vector(), b.as_vector()));
}

inline TTMatrix round(const TTMatrix& a, const TruncationPolicy& policy) {
    return TTMatrix::from_vector(a.row_dims(), a.col_dims(), round(a.as_vector(), policy));
}

/// Dense matrix from the entry formula; intended for small validation sizes.
inline Matrix to_dense(const TTMatrix& a, double limit = kDefaultDenseLimit) {
    const double entries = product(a.row_dims()) * product(a.col_dims());
    if (entries > limit) throw SizeLimitError("to_dense: TT matrix exceeds dense size limit");
    const Index m = product_exact(a.row_dims());
    const Index n = product_exact(a.col_dims());
    Matrix out(m, n);
    for (Index row = 0; row < m; ++row) {
        const auto ri = multi_index(row, a.row_dims());
        for (Index col = 0; col < n; ++col) {
            const auto ci = multi_index(col, a.col_dims());
            Matrix acc = Matrix::Ones(1, 1);
            for (Index k = 0; k < a.order(); ++k)
                acc = acc * a.slice(k, ri[static_cast<std::size_t>(k)], ci[static_cast<std::size_t>(k)]);
            out(row, col) = acc(0, 0);
        }
    }
    return out;
}

/// Exact product A·x; TT ranks multiply.  Combined rank index is α + r_A·a.
inline TTVector matvec_exact(const TTMatrix& a, const TTVector& x) {
    require(a.col_dims() == x.dims(), "matvec: column modes do not match vector modes");
    std::vector<Matrix> cores;
    for (Index k = 0; k < x.order(); ++k) {
        const Index m = a.row_dims()[static_cast<std::size_t>(k)];
        const Index n = x.dim(k);
        const Index ra0 = a.rank(k), ra1 = a.rank(k + 1);
        const Index rx0 = x.rank(k), rx1 = x.rank(k + 1);
        // X permuted to (j) × (a, b)
        Matrix xp(n, rx0 * rx1);
        const auto& xc = x.core(k);
        for (Index b = 0; b < rx1; ++b)
            for (Index j = 0; j < n; ++j)
                for (Index aa = 0; aa < rx0; ++aa) xp(j, aa + rx0 * b) = xc(aa + rx0 * j, b);
        const Index r0 = ra0 * rx0, r1 = ra1 * rx1;
        Matrix out(r0 * m, r1);
        const auto& ac = a.core(k);
        for (Index beta = 0; beta < ra1; ++beta) {
            // A_β: (α, i) × j
            Eigen::Map<const Matrix> abeta(ac.data() + beta * ra0 * m * n, ra0 * m, n);
            Matrix prod = abeta * xp;  // (α + ra0 i) × (a + rx0 b)
            for (Index b = 0; b < rx1; ++b)
                for (Index aa = 0; aa < rx0; ++aa)
                    for (Index i = 0; i < m; ++i)
                        for (Index alpha = 0; alpha < ra0; ++alpha)
                            out(alpha + ra0 * aa + r0 * i, beta + ra1 * b) = prod(alpha + ra0 * i, aa + rx0 * b);
        }
        cores.push_back(std::move(out));
    }
    return {a.row_dims(), std::move(cores)};
}

/// A·diag(s); TT ranks multiply.  Combined rank index is α + r_A·a.
inline TTMatrix scale_columns(const TTMatrix& a, const TTVector& s) {
    require(a.col_dims() == s.dims(), "scale_columns: column modes do not match the scaling vector");
    std::vector<Matrix> cores;
    for (Index k = 0; k < a.order(); ++k) {
        const Index m = a.row_dims()[static_cast<std::size_t>(k)];
        const Index n = s.dim(k);
        const Index ra0 = a.rank(k), ra1 = a.rank(k + 1), rs0 = s.rank(k), rs1 = s.rank(k + 1);
        const Index r0 = ra0 * rs0;
        Matrix out(r0 * m * n, ra1 * rs1);
        const auto& ac = a.core(k);
        const auto& sc = s.core(k);
        for (Index b = 0; b < rs1; ++b)
            for (Index beta = 0; beta < ra1; ++beta)
                for (Index j = 0; j < n; ++j)
                    for (Index i = 0; i < m; ++i)
                        for (Index aa = 0; aa < rs0; ++aa)
                            for (Index alpha = 0; alpha < ra0; ++alpha)
                                out(alpha + ra0 * aa + r0 * (i + m * j), beta + ra1 * b) =
                                    ac(alpha + ra0 * (i + m * j), beta) * sc(aa + rs0 * j, b);
        cores.push_back(std::move(out));
    }
    return {a.row_dims(), a.col_dims(), std::move(cores)};
}

inline TTVector matvec(const TTMatrix& a, const TTVector& x, const TruncationPolicy& policy) {
    return round(matvec_exact(a, x), policy);
}

}  // namespace ttmg
