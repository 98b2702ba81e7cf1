#pragma once

#include <cmath>
#include <iomanip>
#include <ostream>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <unsupported/Eigen/KroneckerProduct>

#include "common.hpp"
#include "tt_core.hpp"

namespace ttmg {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// One summand coeff · (E_1 ⊗ ··· ⊗ E_J).
struct KronTerm {
    double coeff = 1.0;
    std::vector<Matrix> factors;
};

/// A = Σ_t coeff_t ⊗_j E_j^t.  Factors are small dense matrices (the chain and
/// triangle factors of the supported models stay well under a few hundred rows).
class KroneckerSumOperator {
public:
    KroneckerSumOperator() = default;

    KroneckerSumOperator(std::vector<Index> row_dims, std::vector<Index> col_dims)
        : rows_(std::move(row_dims)), cols_(std::move(col_dims)) {
        require(!rows_.empty() && rows_.size() == cols_.size(), "operator: inconsistent mode counts");
    }

    explicit KroneckerSumOperator(const std::vector<Index>& dims) : KroneckerSumOperator(dims, dims) {}

    void add_term(std::vector<Matrix> factors, double coeff = 1.0) {
        require(factors.size() == rows_.size(), "operator term: expected one factor per mode");
        for (std::size_t j = 0; j < factors.size(); ++j)
            require(factors[j].rows() == rows_[j] && factors[j].cols() == cols_[j],
                    "operator term: factor " + std::to_string(j) + " has the wrong shape");
        terms_.push_back({coeff, std::move(factors)});
    }

    Index order() const { return static_cast<Index>(rows_.size()); }
    Index num_terms() const { return static_cast<Index>(terms_.size()); }
    const std::vector<KronTerm>& terms() const { return terms_; }
    const std::vector<Index>& row_dims() const { return rows_; }
    const std::vector<Index>& col_dims() const { return cols_; }
    double rows() const { return product(rows_); }
    double cols() const { return product(cols_); }
    bool square() const { return rows_ == cols_; }

    /// Upper bound on the induced 1-norm: Σ_t |coeff_t| Π_j ‖E_j^t‖₁.
    double norm1_bound() const {
        double total = 0.0;
        for (const auto& t : terms_) {
            double p = std::abs(t.coeff);
            for (const auto& f : t.factors) p *= f.cwiseAbs().colwise().sum().maxCoeff();
            total += p;
        }
        return total;
    }

private:
    std::vector<Index> rows_, cols_;
    std::vector<KronTerm> terms_;
};

/// A = D − L − U with D diagonal, L strictly lower, U strictly upper in the
/// global lexicographic ordering.
struct TriangularSplit {
    KroneckerSumOperator d;
    KroneckerSumOperator l;
    KroneckerSumOperator u;
};

namespace detail {

inline bool is_identity(const Matrix& m) {
    if (m.rows() != m.cols()) return false;
    for (Index j = 0; j < m.cols(); ++j)
        for (Index i = 0; i < m.rows(); ++i)
            if (m(i, j) != (i == j ? 1.0 : 0.0)) return false;
    return true;
}

inline bool is_zero(const Matrix& m) { return (m.array() == 0.0).all(); }

inline TTVector apply_term(const KronTerm& term, const TTVector& x) {
    std::vector<Index> dims;
    std::vector<Matrix> cores;
    for (Index k = 0; k < x.order(); ++k) {
        const auto& e = term.factors[static_cast<std::size_t>(k)];
        dims.push_back(e.rows());
        if (is_identity(e))
            cores.push_back(x.core(k));
        else
            cores.push_back(apply_to_mode(x.core(k), x.rank(k), x.dim(k), e));
    }
    cores[0] *= term.coeff;
    return {std::move(dims), std::move(cores)};
}

}  // namespace detail

/// Σ_t coeff_t (⊗_j E_j^t) x, term by term on the cores, rounding every `stride` terms.
inline TTVector kron_apply(const KroneckerSumOperator& op, const TTVector& x, const TruncationPolicy& policy,
                           Index stride = 4) {
    require(op.col_dims() == x.dims(), "kron_apply: operator columns do not match vector modes");
    require(stride >= 1, "kron_apply: accumulation stride must be positive");
    if (op.num_terms() == 0) return TTVector::zeros(op.row_dims());
    TTVector acc;
    Index pending = 0;
    for (const auto& term : op.terms()) {
        auto y = detail::apply_term(term, x);
        acc = acc.empty() ? std::move(y) : add(acc, y);
        if (++pending == stride) {
            acc = round(acc, policy);
            pending = 0;
        }
    }
    return pending == 0 ? acc : round(acc, policy);
}

/// TT-matrix with one rank slot per term, compressed by exactness-preserving rounding.
inline TTMatrix to_tt_matrix(const KroneckerSumOperator& op) {
    const Index J = op.order();
    const Index T = op.num_terms();
    if (T == 0) {
        std::vector<Matrix> zero;
        for (Index k = 0; k < J; ++k)
            zero.push_back(Matrix::Zero(op.row_dims()[static_cast<std::size_t>(k)],
                                        op.col_dims()[static_cast<std::size_t>(k)]));
        return TTMatrix::kronecker(zero, 0.0);
    }
    if (T == 1) return TTMatrix::kronecker(op.terms()[0].factors, op.terms()[0].coeff);
    std::vector<Matrix> cores;
    for (Index k = 0; k < J; ++k) {
        const Index m = op.row_dims()[static_cast<std::size_t>(k)];
        const Index n = op.col_dims()[static_cast<std::size_t>(k)];
        const Index r0 = (k == 0) ? 1 : T;
        const Index r1 = (k == J - 1) ? 1 : T;
        Matrix c = Matrix::Zero(r0 * m * n, r1);
        for (Index t = 0; t < T; ++t) {
            const auto& term = op.terms()[static_cast<std::size_t>(t)];
            const auto& e = term.factors[static_cast<std::size_t>(k)];
            const double s = (k == 0) ? term.coeff : 1.0;
            const Index a = (k == 0) ? 0 : t;
            const Index b = (k == J - 1) ? 0 : t;
            for (Index j = 0; j < n; ++j)
                for (Index i = 0; i < m; ++i) c(a + r0 * (i + m * j), b) += s * e(i, j);
        }
        cores.push_back(std::move(c));
    }
    TTMatrix raw(op.row_dims(), op.col_dims(), std::move(cores));
    return round(raw, TruncationPolicy::exact());
}

/// Drop zero terms and fold terms together when that is exact: identical factor
/// lists add their coefficients, and terms that differ in a single mode collapse
/// into one term whose factor in that mode is the coefficient-weighted sum.
inline KroneckerSumOperator merge_terms(const KroneckerSumOperator& op) {
    std::vector<KronTerm> terms;
    for (const auto& t : op.terms()) {
        bool zero = (t.coeff == 0.0);
        for (const auto& f : t.factors) zero = zero || detail::is_zero(f);
        if (!zero) terms.push_back(t);
    }
    const std::size_t J = op.row_dims().size();
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t a = 0; a < terms.size() && !changed; ++a) {
            for (std::size_t b = a + 1; b < terms.size() && !changed; ++b) {
                std::size_t differing = 0, mode = 0;
                for (std::size_t j = 0; j < J && differing < 2; ++j) {
                    if (terms[a].factors[j] != terms[b].factors[j]) {
                        ++differing;
                        mode = j;
                    }
                }
                if (differing == 0) {
                    terms[a].coeff += terms[b].coeff;
                } else if (differing == 1) {
                    terms[a].factors[mode] =
                        terms[a].coeff * terms[a].factors[mode] + terms[b].coeff * terms[b].factors[mode];
                    terms[a].coeff = 1.0;
                } else {
                    continue;
                }
                terms.erase(terms.begin() + static_cast<std::ptrdiff_t>(b));
                bool zero = terms[a].coeff == 0.0;
                for (const auto& f : terms[a].factors) zero = zero || detail::is_zero(f);
                if (zero) terms.erase(terms.begin() + static_cast<std::ptrdiff_t>(a));
                changed = true;
            }
        }
    }
    KroneckerSumOperator out(op.row_dims(), op.col_dims());
    for (auto& t : terms) out.add_term(std::move(t.factors), t.coeff);
    return out;
}

/// Append −coeff ⊗_j diag(1ᵀE_j^t) for every term, so that 1ᵀA = 0.  Terms whose
/// compensator vanishes add nothing.
inline KroneckerSumOperator complete_generator(const KroneckerSumOperator& op) {
    require(op.square(), "complete_generator: operator must be square");
    KroneckerSumOperator out = op;
    for (const auto& t : op.terms()) {
        require(t.coeff >= 0.0, "complete_generator: rate terms need nonnegative coefficients");
        std::vector<Matrix> comp;
        bool zero = false;
        for (const auto& f : t.factors) {
            for (Index j = 0; j < f.cols(); ++j)
                for (Index i = 0; i < f.rows(); ++i)
                    require(i == j || f(i, j) >= 0.0, "complete_generator: negative off-diagonal rate");
            Vector cs = f.colwise().sum().transpose();
            zero = zero || (cs.array() == 0.0).all();
            comp.push_back(cs.asDiagonal());
        }
        if (!zero) out.add_term(std::move(comp), -t.coeff);
    }
    return out;
}

/// Ẽ_j = Σ_t coeff_t E_j^t (mode j is 0-based).
inline Matrix aux_local_matrix(const KroneckerSumOperator& op, Index j) {
    require(j >= 0 && j < op.order(), "aux_local_matrix: mode index out of range");
    const auto sj = static_cast<std::size_t>(j);
    Matrix e = Matrix::Zero(op.row_dims()[sj], op.col_dims()[sj]);
    for (const auto& t : op.terms()) e += t.coeff * t.factors[sj];
    return e;
}

/// Which mode dominates the ordering used to split A into triangles.
/// first_mode_major is the Kronecker (vec) order itself; last_mode_major splits
/// as if mode J-1 were the slowest-varying index.
enum class SplitOrder { first_mode_major, last_mode_major };

/// Factor-wise lexicographic triangular splitting of every term.
inline TriangularSplit triangular_split(const KroneckerSumOperator& op,
                                        SplitOrder order = SplitOrder::first_mode_major) {
    require(op.square(), "triangular_split: operator must be square");
    const auto J = static_cast<std::size_t>(op.order());
    TriangularSplit s{KroneckerSumOperator(op.row_dims()), KroneckerSumOperator(op.row_dims()),
                      KroneckerSumOperator(op.row_dims())};
    for (const auto& t : op.terms()) {
        std::vector<Matrix> diag;
        for (const auto& f : t.factors) diag.push_back(Matrix(f.diagonal().asDiagonal()));
        s.d.add_term(diag, t.coeff);
        for (std::size_t m = 0; m < J; ++m) {
            Matrix lower = t.factors[m].triangularView<Eigen::StrictlyLower>();
            Matrix upper = t.factors[m].triangularView<Eigen::StrictlyUpper>();
            std::vector<Matrix> lf, uf;
            for (std::size_t i = 0; i < J; ++i) {
                // modes more significant than m must sit on their diagonal
                const bool before = order == SplitOrder::first_mode_major ? i < m : i > m;
                if (i == m) {
                    lf.push_back(lower);
                    uf.push_back(upper);
                } else if (before) {
                    lf.push_back(diag[i]);
                    uf.push_back(diag[i]);
                } else {
                    lf.push_back(t.factors[i]);
                    uf.push_back(t.factors[i]);
                }
            }
            // A = D − L − U, so L and U carry the negated strict triangles.
            s.l.add_term(std::move(lf), -t.coeff);
            s.u.add_term(std::move(uf), -t.coeff);
        }
    }
    s.d = merge_terms(s.d);
    s.l = merge_terms(s.l);
    s.u = merge_terms(s.u);
    return s;
}

/// D − L, i.e. the lower triangle of A including its diagonal.
inline KroneckerSumOperator lower_with_diagonal(const TriangularSplit& s) {
    KroneckerSumOperator m = s.d;
    for (const auto& t : s.l.terms()) m.add_term(t.factors, -t.coeff);
    return merge_terms(m);
}

/// D − U, the upper triangle of A including its diagonal.
inline KroneckerSumOperator upper_with_diagonal(const TriangularSplit& s) {
    KroneckerSumOperator m = s.d;
    for (const auto& t : s.u.terms()) m.add_term(t.factors, -t.coeff);
    return merge_terms(m);
}

/// Q A P computed factor by factor: each term becomes ⊗_j Q_j E_j^t P_j.
inline KroneckerSumOperator petrov_galerkin(const KroneckerSumOperator& op, const std::vector<Matrix>& p,
                                            const std::vector<Matrix>& q) {
    const auto J = static_cast<std::size_t>(op.order());
    require(p.size() == J && q.size() == J, "petrov_galerkin: one transfer matrix per mode required");
    std::vector<Index> rows, cols;
    for (std::size_t j = 0; j < J; ++j) {
        require(q[j].cols() == op.row_dims()[j], "petrov_galerkin: restriction shape mismatch");
        require(p[j].rows() == op.col_dims()[j], "petrov_galerkin: interpolation shape mismatch");
        rows.push_back(q[j].rows());
        cols.push_back(p[j].cols());
    }
    KroneckerSumOperator out(rows, cols);
    for (const auto& t : op.terms()) {
        std::vector<Matrix> f;
        for (std::size_t j = 0; j < J; ++j) f.push_back(q[j] * t.factors[j] * p[j]);
        out.add_term(std::move(f), t.coeff);
    }
    return out;
}

inline Matrix assemble_dense(const KroneckerSumOperator& op, double limit = kDefaultDenseLimit) {
    if (op.rows() * op.cols() > limit) throw SizeLimitError("assemble_dense: operator exceeds dense size limit");
    Matrix a = Matrix::Zero(product_exact(op.row_dims()), product_exact(op.col_dims()));
    for (const auto& t : op.terms()) {
        Matrix k = t.factors[0];
        for (std::size_t j = 1; j < t.factors.size(); ++j) {
            Matrix next = Eigen::kroneckerProduct(k, t.factors[j]);
            k = std::move(next);
        }
        a += t.coeff * k;
    }
    return a;
}

inline SparseMatrix assemble_sparse(const KroneckerSumOperator& op, double max_rows = 5e6) {
    if (op.rows() > max_rows) throw SizeLimitError("assemble_sparse: operator exceeds size limit");
    SparseMatrix a(product_exact(op.row_dims()), product_exact(op.col_dims()));
    for (const auto& t : op.terms()) {
        SparseMatrix k = t.factors[0].sparseView();
        for (std::size_t j = 1; j < t.factors.size(); ++j) {
            SparseMatrix f = t.factors[j].sparseView();
            SparseMatrix next = Eigen::kroneckerProduct(k, f);
            k = std::move(next);
        }
        a += t.coeff * k;
    }
    a.prune(0.0);
    return a;
}

/// One "row col value" line per nonzero, 0-based indices.
inline void write_triplets(const SparseMatrix& a, std::ostream& os) {
    os << std::setprecision(17);
    for (Index col = 0; col < a.outerSize(); ++col)
        for (SparseMatrix::InnerIterator it(a, col); it; ++it)
            if (it.value() != 0.0) os << it.row() << ' ' << it.col() << ' ' << it.value() << '\n';
}

inline void write_triplets(const KroneckerSumOperator& op, std::ostream& os) {
    write_triplets(assemble_sparse(op), os);
}

}  // namespace ttmg
