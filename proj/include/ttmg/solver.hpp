#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "hierarchy.hpp"
#include "kron_op.hpp"
#include "tt_core.hpp"

namespace ttmg {

enum class SmootherKind { gmres, gauss_seidel, richardson };
enum class SweepDirection { forward, backward, symmetric };
enum class InitialGuess { bootstrap, ones, random };
enum class Termination { converged, max_cycles, stagnated };

inline std::string to_string(SmootherKind s) {
    switch (s) {
        case SmootherKind::gmres: return "gmres";
        case SmootherKind::gauss_seidel: return "gauss_seidel";
        case SmootherKind::richardson: return "richardson";
    }
    return "?";
}

inline std::string to_string(SweepDirection d) {
    switch (d) {
        case SweepDirection::forward: return "forward";
        case SweepDirection::backward: return "backward";
        case SweepDirection::symmetric: return "symmetric";
    }
    return "?";
}

inline std::string to_string(InitialGuess g) {
    switch (g) {
        case InitialGuess::bootstrap: return "bootstrap";
        case InitialGuess::ones: return "ones";
        case InitialGuess::random: return "random";
    }
    return "?";
}

inline std::string to_string(Termination t) {
    switch (t) {
        case Termination::converged: return "converged";
        case Termination::max_cycles: return "max_cycles";
        case Termination::stagnated: return "stagnated";
    }
    return "?";
}

struct InnerSolverConfig {
    double tolerance = 1e-7;  // relative residual of the triangular solve
    Index max_iterations = 20;
    Index restart = 10;
    bool jacobi_scaling = true;  // right preconditioning of the triangular solve by D⁻¹
};

struct SolverConfig {
    Index nu1 = 3;
    Index nu2 = 3;
    SmootherKind smoother = SmootherKind::gmres;
    SweepDirection sweep = SweepDirection::forward;  // Gauss-Seidel only; symmetric = forward then backward
    SplitOrder split_order = SplitOrder::first_mode_major;
    double richardson_weight = 0.0;  // 0: 1/‖A‖₁ bound of the level

    Index initial_max_rank = 30;
    double rank_growth = std::sqrt(2.0);
    Index rank_limit = 1000;
    double theta = 0.15;

    double tolerance = 1e-7;
    Index max_cycles = 50;
    Index stagnation_window = 10;  // cycles without a new best residual at the rank limit

    // Iterate truncation: ε = factor · max(‖Ax‖, tol) / (‖A‖₁ ‖x‖₂), clamped.
    double truncation_factor = 0.1;
    double max_truncation_eps = 1e-3;
    double min_truncation_eps = 1e-14;
    double fixed_truncation_eps = 0.0;  // > 0 overrides the schedule
    double coarse_eps = 1e-14;           // dense ↔ TT conversions on the coarsest level

    InnerSolverConfig inner;
    InitialGuess initial_guess = InitialGuess::bootstrap;
    std::uint64_t seed = 0;
    bool final_compression = false;

    void validate() const {
        require(nu1 >= 0 && nu2 >= 0 && nu1 + nu2 >= 1, "solver: need at least one smoothing step");
        require(theta > 0.0 && theta < 1.0, "solver: theta must lie in (0, 1)");
        require(tolerance > 0.0, "solver: tolerance must be positive");
        require(initial_max_rank >= 1 && rank_limit >= initial_max_rank, "solver: invalid rank cap settings");
        require(rank_growth >= 1.0, "solver: rank growth factor must be at least 1");
        require(max_cycles >= 0, "solver: max_cycles must be nonnegative");
        require(stagnation_window >= 1, "solver: stagnation window must be positive");
        require(truncation_factor > 0.0, "solver: truncation factor must be positive");
        require(min_truncation_eps >= 0.0 && max_truncation_eps >= min_truncation_eps,
                "solver: invalid truncation bounds");
        require(fixed_truncation_eps >= 0.0 && coarse_eps >= 0.0, "solver: truncation tolerances must be nonnegative");
        require(inner.tolerance > 0.0 && inner.max_iterations >= 1 && inner.restart >= 1,
                "solver: invalid inner solver settings");
        require(richardson_weight >= 0.0, "solver: Richardson weight must be nonnegative");
    }
};

struct CycleRecord {
    Index cycle = 0;
    double residual = 0.0;
    Index rank_cap = 0;
    Index max_rank = 0;
    double eff_rank = 0.0;
    double elapsed_seconds = 0.0;
    bool rank_increased = false;  // cap grew after this cycle
};

struct SolveReport {
    std::vector<CycleRecord> records;  // records[0] is the initial guess
    Termination termination = Termination::max_cycles;
    Index cycles = 0;
    double final_residual = 0.0;
    double states = 0.0;
    Index levels = 0;
    Index final_rank_cap = 0;
    Index final_max_rank = 0;
    double final_eff_rank = 0.0;
    double elapsed_seconds = 0.0;

    bool converged() const { return termination == Termination::converged; }
};

// ---------------------------------------------------------------------------
// Krylov building blocks
// ---------------------------------------------------------------------------

/// A TT-matrix applied with rounding.
struct TTLinearOperator {
    const TTMatrix* matrix = nullptr;
    TTVector apply(const TTVector& x, const TruncationPolicy& policy) const { return matvec(*matrix, x, policy); }
};

struct GmresResult {
    TTVector x;
    double initial_residual = 0.0;
    double residual = 0.0;  // least-squares estimate at exit
    Index iterations = 0;
    bool converged = false;
};

namespace detail {

/// b − A x, with an absent b meaning zero.
template <typename Op>
TTVector residual(const Op& a, const TTVector* b, const TTVector& x, const TruncationPolicy& policy) {
    TTVector ax = a.apply(x, policy);
    if (b == nullptr) return scale(ax, -1.0);
    return round(subtract(*b, ax), policy);
}

/// One GMRES cycle of at most m steps starting from x0.  Orthogonalization is
/// modified Gram-Schmidt with a rounding after every projection.
template <typename Op>
GmresResult gmres_cycle(const Op& a, const TTVector* b, const TTVector& x0, Index m, double abs_tol,
                        const TruncationPolicy& policy) {
    GmresResult out;
    const TTVector ax = a.apply(x0, policy);
    const TTVector r = b ? round(subtract(*b, ax), policy) : scale(ax, -1.0);
    const double beta = norm(r);
    out.initial_residual = beta;
    out.residual = beta;
    out.x = x0;
    // b = A x0 up to roundoff counts as breakdown: x0 is returned unchanged
    const double scale_ref = (b ? norm(*b) : 0.0) + norm(ax);
    if (beta <= abs_tol || beta <= 1e-14 * scale_ref) {
        out.converged = true;
        return out;
    }
    std::vector<TTVector> v;
    v.push_back(scale(r, 1.0 / beta));
    Matrix h = Matrix::Zero(m + 1, m);
    Index steps = 0;
    double estimate = beta;
    for (Index j = 0; j < m; ++j) {
        TTVector w = a.apply(v[static_cast<std::size_t>(j)], policy);
        for (Index i = 0; i <= j; ++i) {
            const auto& vi = v[static_cast<std::size_t>(i)];
            const double hij = dot(vi, w);
            h(i, j) = hij;
            w = round(subtract(w, scale(vi, hij)), policy);
        }
        const double hn = norm(w);
        h(j + 1, j) = hn;
        steps = j + 1;
        Vector g = Vector::Zero(steps + 1);
        g(0) = beta;
        Matrix hs = h.topLeftCorner(steps + 1, steps);
        Vector y = hs.colPivHouseholderQr().solve(g);
        estimate = (g - hs * y).norm();
        if (hn <= 1e-14 * beta || estimate <= abs_tol) break;
        v.push_back(scale(w, 1.0 / hn));
    }
    Vector g = Vector::Zero(steps + 1);
    g(0) = beta;
    Matrix hs = h.topLeftCorner(steps + 1, steps);
    Vector y = hs.colPivHouseholderQr().solve(g);
    TTVector x = x0;
    for (Index i = 0; i < steps; ++i) x = round(add(x, scale(v[static_cast<std::size_t>(i)], y(i))), policy);
    out.x = std::move(x);
    out.iterations = steps;
    out.residual = estimate;
    out.converged = estimate <= abs_tol;
    return out;
}

}  // namespace detail

/// Restarted truncated GMRES to a relative tolerance.
template <typename Op>
GmresResult gmres_solve(const Op& a, const TTVector* b, const TTVector& x0, double rel_tol, Index max_iterations,
                        Index restart, const TruncationPolicy& policy) {
    require(max_iterations >= 1 && restart >= 1, "gmres_solve: iteration counts must be positive");
    GmresResult total;
    total.x = x0;
    total.initial_residual = norm(detail::residual(a, b, x0, policy));
    total.residual = total.initial_residual;
    const double abs_tol = rel_tol * total.initial_residual;
    while (total.iterations < max_iterations && total.residual > abs_tol) {
        const Index m = std::min(restart, max_iterations - total.iterations);
        auto res = detail::gmres_cycle(a, b, total.x, m, abs_tol, policy);
        total.x = std::move(res.x);
        total.residual = res.residual;
        total.iterations += res.iterations;
        if (res.iterations == 0) break;
    }
    total.converged = total.residual <= abs_tol;
    return total;
}

/// A fixed number of GMRES steps (no restart) from x0.
template <typename Op>
TTVector gmres_smooth(const Op& a, const TTVector* b, const TTVector& x0, Index steps,
                      const TruncationPolicy& policy) {
    require(steps >= 1, "gmres_smooth: at least one step required");
    return detail::gmres_cycle(a, b, x0, steps, 0.0, policy).x;
}

/// Diagonal of an operator as a TT tensor, rounded to near machine precision.
inline TTVector operator_diagonal(const KroneckerSumOperator& op) {
    require(op.square(), "operator_diagonal: operator must be square");
    TTVector d = TTVector::zeros(op.row_dims());
    for (const auto& t : op.terms()) {
        std::vector<Vector> f;
        for (const auto& e : t.factors) f.push_back(e.diagonal());
        f[0] *= t.coeff;
        d = round(add(d, from_elementary(f)), TruncationPolicy::tolerance(1e-14));
    }
    return d;
}

/// Elementwise reciprocal of a same-signed tensor by the Newton iteration
/// y ← y ∘ (2 − d ∘ y).  Returns nullopt when the relative defect ‖1 − d∘y‖/‖1‖
/// does not fall below `tol`.
inline std::optional<TTVector> reciprocal(const TTVector& d, double bound, double tol,
                                          const TruncationPolicy& policy, Index max_iterations = 60) {
    require(bound > 0.0, "reciprocal: bound must be positive");
    const auto ones = TTVector::ones(d.dims());
    const double ones_norm = norm(ones);
    const double s = sum(d);
    if (!(std::abs(s) > 0.0)) return std::nullopt;
    // 0 < d∘y₀ ≤ 1 when every entry has the sign of the sum and |d| ≤ bound
    TTVector y = scale(ones, (s > 0.0 ? 1.0 : -1.0) / bound);
    for (Index it = 0; it < max_iterations; ++it) {
        const TTVector defect = round(subtract(ones, hadamard(d, y)), policy);
        const double rel = norm(defect) / ones_norm;
        // the defect squares each step: a large one means some entry left the basin
        if (!std::isfinite(rel) || rel > 1e3) return std::nullopt;
        if (rel <= tol) return y;
        y = round(add(y, hadamard(y, defect)), policy);
    }
    return std::nullopt;
}

struct GaussSeidelSmoother {
    TTMatrix lower;  // D − L of the level operator
    TTMatrix upper;  // D − U, only built for backward or symmetric sweeps
    std::optional<TTVector> dinv;  // approximate D⁻¹ when Jacobi scaling is on

    static GaussSeidelSmoother from_operator(const KroneckerSumOperator& op,
                                             SweepDirection dir = SweepDirection::forward,
                                             SplitOrder order = SplitOrder::first_mode_major,
                                             bool jacobi_scaling = false) {
        const auto split = triangular_split(op, order);
        GaussSeidelSmoother gs;
        if (dir != SweepDirection::backward) gs.lower = to_tt_matrix(lower_with_diagonal(split));
        if (dir != SweepDirection::forward) gs.upper = to_tt_matrix(upper_with_diagonal(split));
        if (jacobi_scaling && op.order() >= 2) {
            const auto d = operator_diagonal(split.d);
            gs.dinv = reciprocal(d, split.d.norm1_bound(), 1e-3, TruncationPolicy::tolerance(1e-4));
        }
        return gs;
    }
};

/// v ↦ M(s ∘ v), rounded after each factor.
struct ScaledOperator {
    const TTMatrix* matrix = nullptr;
    const TTVector* scaling = nullptr;
    TTVector apply(const TTVector& x, const TruncationPolicy& policy) const {
        return matvec(*matrix, round(hadamard(*scaling, x), policy), policy);
    }
};

/// x0 + M⁻¹(b − A x0) for one triangular M, applied through an inner GMRES solve.
/// With a scaling s the inner solve is on M·diag(s) and the correction is s ∘ y.
inline TTVector triangular_sweep(const TTMatrix& a, const TTMatrix& m, const TTVector* b, const TTVector& x0,
                                 const InnerSolverConfig& inner, const TruncationPolicy& policy,
                                 GmresResult* inner_report = nullptr, const TTVector* scaling = nullptr) {
    TTLinearOperator aop{&a};
    TTLinearOperator mop{&m};
    TTVector r = detail::residual(aop, b, x0, policy);
    if (norm(r) == 0.0) return x0;
    const auto zero = TTVector::zeros(r.dims());
    auto res = scaling ? gmres_solve(ScaledOperator{&m, scaling}, &r, zero, inner.tolerance, inner.max_iterations,
                                     inner.restart, policy)
                       : gmres_solve(mop, &r, zero, inner.tolerance, inner.max_iterations, inner.restart, policy);
    if (inner_report) *inner_report = res;
    const TTVector e = scaling ? round(hadamard(*scaling, res.x), policy) : res.x;
    return round(add(x0, e), policy);
}

/// One Gauss-Seidel step with M = D − L (forward), D − U (backward), or both in
/// sequence (symmetric).
inline TTVector gauss_seidel_smooth(const TTMatrix& a, const GaussSeidelSmoother& gs, const TTVector* b,
                                    const TTVector& x0, const InnerSolverConfig& inner,
                                    const TruncationPolicy& policy, SweepDirection dir = SweepDirection::forward,
                                    GmresResult* inner_report = nullptr) {
    TTVector x = x0;
    const TTVector* sc = gs.dinv ? &*gs.dinv : nullptr;
    if (dir != SweepDirection::backward)
        x = triangular_sweep(a, gs.lower, b, x, inner, policy, inner_report, sc);
    if (dir != SweepDirection::forward)
        x = triangular_sweep(a, gs.upper, b, x, inner, policy, inner_report, sc);
    return x;
}

/// x ← x − ω(b − A x).  Generator spectra lie in the closed left half-plane, so
/// this is Richardson on −A; with b = 0 it is the uniformized power step x + ωAx.
inline TTVector richardson_smooth(const TTMatrix& a, const TTVector* b, const TTVector& x0, double weight,
                                  Index steps, const TruncationPolicy& policy) {
    TTLinearOperator aop{&a};
    TTVector x = x0;
    for (Index s = 0; s < steps; ++s) x = round(add(x, scale(detail::residual(aop, b, x, policy), -weight)), policy);
    return x;
}

// ---------------------------------------------------------------------------
// Coarsest level
// ---------------------------------------------------------------------------

/// Minimum-norm least-squares solves with a fixed dense matrix.
class PseudoInverse {
public:
    PseudoInverse() = default;

    explicit PseudoInverse(const Matrix& a, double rel_cutoff = 1e-12) : svd_(a, Eigen::ComputeThinU | Eigen::ComputeThinV) {
        const Vector& s = svd_.singularValues();
        const double cut = s.size() > 0 ? rel_cutoff * s(0) : 0.0;
        inv_ = Vector::Zero(s.size());
        for (Index i = 0; i < s.size(); ++i)
            if (s(i) > cut) inv_(i) = 1.0 / s(i);
    }

    Vector solve(const Vector& r) const {
        Vector t = svd_.matrixU().transpose() * r;
        return svd_.matrixV() * inv_.cwiseProduct(t);
    }

    /// Right singular vector of the smallest singular value.
    Vector null_vector() const {
        const auto& v = svd_.matrixV();
        return v.col(v.cols() - 1);
    }

    const Vector& singular_values() const { return svd_.singularValues(); }

private:
    Eigen::BDCSVD<Matrix> svd_;
    Vector inv_;
};

inline Vector coarsest_solve(const Matrix& a_dense, const Vector& r) { return PseudoInverse(a_dense).solve(r); }

// ---------------------------------------------------------------------------
// Multigrid
// ---------------------------------------------------------------------------

/// Everything a V-cycle needs besides the hierarchy itself.
class MultigridContext {
public:
    MultigridContext(const GridHierarchy& h, SolverConfig cfg) : h_(&h), cfg_(std::move(cfg)) {
        cfg_.validate();
        require(h.num_levels() >= 1, "multigrid: empty hierarchy");
        pinv_ = PseudoInverse(h.coarsest_dense);
        if (cfg_.smoother == SmootherKind::gauss_seidel)
            for (const auto& level : h.levels) gs_.push_back(GaussSeidelSmoother::from_operator(level.op, cfg_.sweep, cfg_.split_order, cfg_.inner.jacobi_scaling));
        for (const auto& level : h.levels) norm1_.push_back(level.op.norm1_bound());
    }

    const GridHierarchy& hierarchy() const { return *h_; }
    const SolverConfig& config() const { return cfg_; }
    const PseudoInverse& coarse_inverse() const { return pinv_; }

    TTVector smooth(Index level, const TTVector* b, const TTVector& x, Index steps,
                    const TruncationPolicy& policy) const {
        if (steps == 0) return x;
        const auto& a = h_->levels[static_cast<std::size_t>(level)].op_tt;
        switch (cfg_.smoother) {
            case SmootherKind::gmres:
                return gmres_smooth(TTLinearOperator{&a}, b, x, steps, policy);
            case SmootherKind::gauss_seidel: {
                TTVector y = x;
                for (Index s = 0; s < steps; ++s)
                    y = gauss_seidel_smooth(a, gs_[static_cast<std::size_t>(level)], b, y, cfg_.inner, policy, cfg_.sweep);
                return y;
            }
            case SmootherKind::richardson: {
                const double w = cfg_.richardson_weight > 0.0 ? cfg_.richardson_weight
                                                              : 1.0 / norm1_[static_cast<std::size_t>(level)];
                return richardson_smooth(a, b, x, w, steps, policy);
            }
        }
        return x;
    }

    /// x + A⁺(b − A x) on the coarsest level, through dense vectors.
    TTVector coarse_correct(const TTVector* b, const TTVector& x, const TruncationPolicy& policy) const {
        const auto& level = h_->coarsest();
        Vector xf = to_full(x);
        Vector r = -(h_->coarsest_dense * xf);
        if (b) r += to_full(*b);
        Vector e = pinv_.solve(r);
        TTVector et = from_full(e, level.dims, TruncationPolicy::capped(cfg_.coarse_eps, policy.max_rank));
        return round(add(x, et), policy);
    }

private:
    const GridHierarchy* h_;
    SolverConfig cfg_;
    PseudoInverse pinv_;
    std::vector<GaussSeidelSmoother> gs_;
    std::vector<double> norm1_;
};

/// One V-cycle from `level` down.  An absent b means a zero right-hand side.
inline TTVector vcycle(const MultigridContext& ctx, Index level, const TTVector* b, const TTVector& x,
                       const TruncationPolicy& policy) {
    const auto& h = ctx.hierarchy();
    require(level >= 0 && level < h.num_levels(), "vcycle: level out of range");
    const auto& lv = h.levels[static_cast<std::size_t>(level)];
    require(x.dims() == lv.dims, "vcycle: iterate does not match level shape");
    if (level == h.num_levels() - 1) return ctx.coarse_correct(b, x, policy);
    const auto& cfg = ctx.config();
    TTVector y = ctx.smooth(level, b, x, cfg.nu1, policy);
    TTLinearOperator aop{&lv.op_tt};
    TTVector r = detail::residual(aop, b, y, policy);
    const auto& t = *lv.transfer;
    TTVector bc = round(apply_modewise(r, t.q), policy);
    const auto& coarse_dims = h.levels[static_cast<std::size_t>(level + 1)].dims;
    TTVector ec = vcycle(ctx, level + 1, &bc, TTVector::zeros(coarse_dims), policy);
    TTVector e = round(apply_modewise(ec, t.p), policy);
    y = round(add(y, e), policy);
    return ctx.smooth(level, b, y, cfg.nu2, policy);
}

/// Coarsest null vector interpolated to the finest level, scaled to 1ᵀx = 1.
inline TTVector bootstrap_initial_guess(const GridHierarchy& h, const TruncationPolicy& policy,
                                        const PseudoInverse* pinv = nullptr) {
    PseudoInverse local;
    if (!pinv) {
        local = PseudoInverse(h.coarsest_dense);
        pinv = &local;
    }
    const Vector v = pinv->null_vector();
    require(v.allFinite(), "bootstrap: coarsest singular vector is not finite");
    TTVector x = from_full(v, h.coarsest().dims, TruncationPolicy::capped(1e-14, policy.max_rank));
    for (Index l = h.num_levels() - 2; l >= 0; --l)
        x = round(apply_modewise(x, h.levels[static_cast<std::size_t>(l)].transfer->p), policy);
    const double s = sum(x);
    const double scale_ref = norm(x) * std::sqrt(h.finest().op.rows());
    if (!(std::abs(s) > 1e-12 * scale_ref)) {
        auto ones = TTVector::ones(h.finest().dims);
        return scale(ones, 1.0 / h.finest().op.rows());
    }
    return scale(x, 1.0 / s);
}

namespace detail {

inline TTVector random_guess(const std::vector<Index>& dims, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<Vector> f;
    for (auto n : dims) {
        Vector v(n);
        // strictly positive so the sum cannot vanish
        for (Index i = 0; i < n; ++i) v(i) = 0.5 + static_cast<double>(rng() >> 11) * 0x1.0p-53;
        f.push_back(v);
    }
    auto x = from_elementary(f);
    return scale(x, 1.0 / sum(x));
}

inline double exact_residual(const TTMatrix& a, const TTVector& x) { return norm(matvec_exact(a, x)); }

}  // namespace detail

struct SolveResult {
    TTVector x;
    SolveReport report;
};

inline double truncation_eps(const SolverConfig& cfg, double residual, double anorm, double xnorm) {
    if (cfg.fixed_truncation_eps > 0.0) return cfg.fixed_truncation_eps;
    const double denom = anorm * xnorm;
    double eps = denom > 0.0 ? cfg.truncation_factor * std::max(residual, cfg.tolerance) / denom : cfg.max_truncation_eps;
    return std::clamp(eps, cfg.min_truncation_eps, cfg.max_truncation_eps);
}

/// V-cycles with b = 0 on the finest level, normalization after every cycle and
/// rank-cap growth when the residual stalls at the cap.
using CycleObserver = std::function<void(const CycleRecord&)>;

inline SolveResult solve_stationary(const GridHierarchy& h, const SolverConfig& cfg_in, bool record_time = true,
                                    const CycleObserver& observer = {}) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    auto elapsed = [&] {
        return record_time ? std::chrono::duration<double>(clock::now() - start).count() : 0.0;
    };
    MultigridContext ctx(h, cfg_in);
    const auto& cfg = ctx.config();
    const auto& a = h.finest().op_tt;
    const double anorm = h.finest().op.norm1_bound();

    Index cap = cfg.initial_max_rank;
    TTVector x;
    switch (cfg.initial_guess) {
        case InitialGuess::bootstrap:
            x = bootstrap_initial_guess(h, TruncationPolicy::capped(cfg.min_truncation_eps, cap), &ctx.coarse_inverse());
            break;
        case InitialGuess::ones:
            x = scale(TTVector::ones(h.finest().dims), 1.0 / h.finest().op.rows());
            break;
        case InitialGuess::random:
            x = detail::random_guess(h.finest().dims, cfg.seed);
            break;
    }

    SolveResult out;
    auto& rep = out.report;
    rep.states = h.finest().op.rows();
    rep.levels = h.num_levels();
    auto record = [&](Index cycle, double res) {
        CycleRecord rec;
        rec.cycle = cycle;
        rec.residual = res;
        rec.rank_cap = cap;
        rec.max_rank = x.max_rank();
        rec.eff_rank = x.order() >= 2 ? effective_rank(x) : 1.0;
        rec.elapsed_seconds = elapsed();
        rep.records.push_back(rec);
        if (observer) observer(rec);
    };

    double res = detail::exact_residual(a, x);
    record(0, res);
    TTVector best = x;
    double best_res = res;
    Index best_cycle = 0;
    rep.termination = Termination::max_cycles;
    if (res < cfg.tolerance) rep.termination = Termination::converged;

    for (Index cycle = 1; cycle <= cfg.max_cycles && rep.termination != Termination::converged; ++cycle) {
        const double eps = truncation_eps(cfg, res, anorm, norm(x));
        const auto policy = TruncationPolicy::capped(eps, cap);
        x = vcycle(ctx, 0, nullptr, x, policy);
        const double s = sum(x);
        require(std::isfinite(s) && s != 0.0, "solve_stationary: iterate lost its normalization");
        x = scale(x, 1.0 / s);
        const double prev = res;
        res = detail::exact_residual(a, x);
        record(cycle, res);
        rep.cycles = cycle;
        if (res < best_res) {
            best = x;
            best_res = res;
            best_cycle = cycle;
        }
        if (res < cfg.tolerance) {
            rep.termination = Termination::converged;
            break;
        }
        if (x.max_rank() >= cap && res / prev > 1.0 - cfg.theta && cap < cfg.rank_limit) {
            cap = std::min(cfg.rank_limit, static_cast<Index>(std::ceil(static_cast<double>(cap) * cfg.rank_growth)));
            rep.records.back().rank_increased = true;
        }
        if (cap >= cfg.rank_limit && cycle - best_cycle >= cfg.stagnation_window) {
            rep.termination = Termination::stagnated;
            break;
        }
    }

    x = rep.termination == Termination::converged ? x : best;
    res = rep.termination == Termination::converged ? res : best_res;
    if (cfg.final_compression && rep.termination == Termination::converged) {
        // loosest tolerance (in decades) that keeps the residual below target
        for (double eps = 1e-2; eps >= 1e-12; eps *= 0.1) {
            TTVector c = round(x, TruncationPolicy::tolerance(eps));
            c = scale(c, 1.0 / sum(c));
            const double rc = detail::exact_residual(a, c);
            if (rc < cfg.tolerance) {
                x = std::move(c);
                res = rc;
                break;
            }
        }
    }
    rep.final_residual = res;
    rep.final_rank_cap = cap;
    rep.final_max_rank = x.max_rank();
    rep.final_eff_rank = x.order() >= 2 ? effective_rank(x) : 1.0;
    rep.elapsed_seconds = elapsed();
    out.x = std::move(x);
    return out;
}

struct RankPoint {
    Index rank = 0;
    double error = 0.0;     // ‖x − x_R‖₂ / ‖x‖₂
    double residual = 0.0;  // ‖A x_R‖₂ after scaling x_R to 1ᵀx_R = 1
};

/// Accuracy of the best-effort rank-R truncations of a reference solution, R = 1..max_rank.
inline std::vector<RankPoint> rank_accuracy(const TTVector& ref, const TTMatrix& a, Index max_rank) {
    require(max_rank >= 1, "rank_accuracy: max_rank must be positive");
    const double ref_norm = norm(ref);
    std::vector<RankPoint> out;
    for (Index r = 1; r <= max_rank; ++r) {
        const TTVector t = round(ref, TruncationPolicy::capped(0.0, r));
        const TTVector tn = scale(t, 1.0 / sum(t));
        out.push_back({r, norm(subtract(ref, t)) / ref_norm, norm(matvec_exact(a, tn))});
    }
    return out;
}

}  // namespace ttmg
