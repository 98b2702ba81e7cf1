#include <random>

#include "catch_amalgamated.hpp"
#include "oracles.hpp"
#include "ttmg/hierarchy.hpp"
#include "ttmg/models.hpp"
#include "ttmg/solver.hpp"

using namespace ttmg;

namespace {

// Dense GMRES: m Arnoldi steps with modified Gram-Schmidt from x0, least-squares update.
Vector dense_gmres(const Matrix& a, const Vector& b, const Vector& x0, Index m) {
    const Vector r = b - a * x0;
    const double beta = r.norm();
    if (beta == 0.0) return x0;
    Matrix v = Matrix::Zero(a.rows(), m + 1);
    Matrix h = Matrix::Zero(m + 1, m);
    v.col(0) = r / beta;
    Index steps = 0;
    for (Index j = 0; j < m; ++j) {
        Vector w = a * v.col(j);
        for (Index i = 0; i <= j; ++i) {
            h(i, j) = v.col(i).dot(w);
            w -= h(i, j) * v.col(i);
        }
        h(j + 1, j) = w.norm();
        steps = j + 1;
        if (h(j + 1, j) <= 1e-14 * beta) break;
        v.col(j + 1) = w / h(j + 1, j);
    }
    Vector g = Vector::Zero(steps + 1);
    g(0) = beta;
    Vector y = h.topLeftCorner(steps + 1, steps).colPivHouseholderQr().solve(g);
    return x0 + v.leftCols(steps) * y;
}

Matrix dense_pinv(const Matrix& a) {
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector& s = svd.singularValues();
    Vector inv = Vector::Zero(s.size());
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > 1e-12 * s(0)) inv(i) = 1.0 / s(i);
    return svd.matrixV().leftCols(s.size()) * inv.asDiagonal() * svd.matrixU().leftCols(s.size()).transpose();
}

// Permutation from the Kronecker index to the index with the mode order reversed.
Eigen::PermutationMatrix<Eigen::Dynamic> reverse_modes(const std::vector<Index>& dims) {
    std::vector<Index> rev(dims.rbegin(), dims.rend());
    const Index n = product_exact(dims);
    Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
    for (Index i = 0; i < n; ++i) {
        auto idx = multi_index(i, dims);
        std::reverse(idx.begin(), idx.end());
        perm.indices()(i) = static_cast<int>(linear_index(idx, rev));
    }
    return perm;
}

// D − L of A in the given global ordering.
Matrix dense_lower(const Matrix& a, const std::vector<Index>& dims, SplitOrder order) {
    if (order == SplitOrder::first_mode_major) return a.triangularView<Eigen::Lower>();
    auto perm = reverse_modes(dims);
    Matrix pa = perm * a * perm.transpose();
    Matrix lower = pa.triangularView<Eigen::Lower>();
    return perm.transpose() * lower * perm;
}

struct DenseLevel {
    Matrix a, p, q;
};

// Dense V-cycle with GMRES smoothing and a pseudo-inverse at the bottom.
Vector dense_vcycle(const std::vector<DenseLevel>& lv, const Matrix& coarse_pinv, std::size_t l, const Vector& b,
                    const Vector& x, Index nu1, Index nu2) {
    if (l + 1 == lv.size()) return x + coarse_pinv * (b - lv[l].a * x);
    Vector y = dense_gmres(lv[l].a, b, x, nu1);
    Vector bc = lv[l].q * (b - lv[l].a * y);
    Vector ec = dense_vcycle(lv, coarse_pinv, l + 1, bc, Vector::Zero(bc.size()), nu1, nu2);
    y += lv[l].p * ec;
    return dense_gmres(lv[l].a, b, y, nu2);
}

std::vector<DenseLevel> dense_levels(const GridHierarchy& h) {
    std::vector<DenseLevel> out;
    for (const auto& l : h.levels) {
        DenseLevel d{oracle::dense_operator(l.op), {}, {}};
        if (l.transfer) {
            d.p = oracle::kron_all(l.transfer->p);
            d.q = oracle::kron_all(l.transfer->q);
        }
        out.push_back(d);
    }
    return out;
}

HierarchyOptions kanban_options() {
    HierarchyOptions o;
    o.strategy = CoarseningStrategy::kanban;
    return o;
}

const TruncationPolicy kNoTruncation = TruncationPolicy::exact();

}  // namespace

TEST_CASE("GMRES smoothing", "[solver]") {
    std::mt19937_64 rng(31);
    auto op = build_overflow(OverflowParams::uniform(2, 2, {1.2, 0.7}, {1.0, 1.3}));
    const auto a = to_tt_matrix(op);
    const Matrix ad = oracle::dense_operator(op);
    TTLinearOperator aop{&a};

    auto x0 = oracle::random_tt({3, 3}, 2, rng);
    auto b_exact = matvec_exact(a, x0);
    auto same = gmres_smooth(aop, &b_exact, x0, 3, kNoTruncation);
    CHECK((oracle::dense(same) - oracle::dense(x0)).norm() == 0.0);

    auto b = oracle::random_tt({3, 3}, 2, rng);
    auto x = gmres_smooth(aop, &b, x0, 3, kNoTruncation);
    Vector ref = dense_gmres(ad, oracle::dense(b), oracle::dense(x0), 3);
    CHECK((oracle::dense(x) - ref).norm() <= 1e-10 * (1 + ref.norm()));
    CHECK_THROWS_AS(gmres_smooth(aop, &b, x0, 0, kNoTruncation), Error);

    // nonsingular system solved to tolerance by restarted GMRES
    Matrix m = Matrix::Identity(9, 9) * 4.0 + oracle::random_matrix(9, 9, rng) * 0.3;
    KroneckerSumOperator mop({9});
    mop.add_term({m});
    const auto mt = to_tt_matrix(mop);
    auto rhs = from_full(oracle::random_vector(9, rng), {9});
    auto res = gmres_solve(TTLinearOperator{&mt}, &rhs, TTVector::zeros({9}), 1e-12, 50, 4, kNoTruncation);
    CHECK(res.converged);
    CHECK((m * oracle::dense(res.x) - oracle::dense(rhs)).norm() <= 1e-11 * oracle::dense(rhs).norm());
}

TEST_CASE("Richardson smoothing", "[solver]") {
    std::mt19937_64 rng(35);
    auto op = build_overflow(OverflowParams::uniform(2, 2, {1.2, 0.7}, {1.0, 1.3}));
    const auto a = to_tt_matrix(op);
    const Matrix ad = oracle::dense_operator(op);
    auto x0 = oracle::random_tt({3, 3}, 2, rng);
    auto b = oracle::random_tt({3, 3}, 2, rng);
    const double w = 0.3;
    Vector ref = oracle::dense(x0);
    for (int s = 0; s < 2; ++s) ref -= w * (oracle::dense(b) - ad * ref);
    CHECK((oracle::dense(richardson_smooth(a, &b, x0, w, 2, kNoTruncation)) - ref).norm() <= 1e-12 * ref.norm());
    // b = 0 with ω ≤ 1/‖A‖₁: the power iteration of I + ωA approaches the stationary vector
    auto p = richardson_smooth(a, nullptr, x0, 1.0 / op.norm1_bound(), 400, kNoTruncation);
    const Vector pd = oracle::dense(p);
    const Vector xs = oracle_stationary(oracle_generator(OverflowParams::uniform(2, 2, {1.2, 0.7}, {1.0, 1.3})));
    CHECK((pd / pd.sum() - xs).norm() <= 1e-8);
}

TEST_CASE("truncated GMRES smoothing does not increase the residual", "[solver][slow]") {
    auto op = build_overflow(
        OverflowParams::uniform(6, 8, {1.2, 1.1, 1.0, 0.9, 0.8, 0.7}, std::vector<double>(6, 1.0)));
    auto h = build_hierarchy(op);
    const auto policy = TruncationPolicy::capped(1e-8, 20);
    auto x0 = bootstrap_initial_guess(h, policy);
    const auto& a = h.finest().op_tt;
    const double before = norm(matvec_exact(a, x0));
    auto x1 = gmres_smooth(TTLinearOperator{&a}, nullptr, x0, 3, policy);
    const double after = norm(matvec_exact(a, x1));
    CHECK(after <= 1.01 * before);
    CHECK(x1.max_rank() <= 20);
}

TEST_CASE("Gauss-Seidel smoothing", "[solver]") {
    std::mt19937_64 rng(32);
    InnerSolverConfig exact_inner{1e-14, 200, 50};

    // diagonal operator: a sweep is a Jacobi step
    Vector diag(4);
    diag << 2, 3, 5, 7;
    KroneckerSumOperator d({4});
    d.add_term({Matrix(diag.asDiagonal())});
    auto dt = to_tt_matrix(d);
    auto gsd = GaussSeidelSmoother::from_operator(d);
    auto b = from_full(oracle::random_vector(4, rng), {4});
    auto x = gauss_seidel_smooth(dt, gsd, &b, TTVector::zeros({4}), exact_inner, kNoTruncation);
    CHECK((oracle::dense(x) - oracle::dense(b).cwiseQuotient(diag)).norm() <= 1e-13);

    auto kan = build_kanban(KanbanParams::uniform(2, 2, 1.0, 0.1));
    const auto kt = to_tt_matrix(kan);
    const Matrix kd = oracle::dense_operator(kan);
    auto x0 = oracle::random_tt({3, 3}, 2, rng);
    auto rhs = oracle::random_tt({3, 3}, 2, rng);
    for (auto order : {SplitOrder::first_mode_major, SplitOrder::last_mode_major}) {
        auto gs = GaussSeidelSmoother::from_operator(kan, SweepDirection::forward, order);
        auto y = gauss_seidel_smooth(kt, gs, &rhs, x0, exact_inner, kNoTruncation);
        const Matrix m = dense_lower(kd, {3, 3}, order);
        const Vector ref = oracle::dense(x0) + m.fullPivLu().solve(oracle::dense(rhs) - kd * oracle::dense(x0));
        CHECK((oracle::dense(y) - ref).norm() <= 1e-9 * (1 + ref.norm()));
    }
    // backward sweep uses D − U
    auto gsb = GaussSeidelSmoother::from_operator(kan, SweepDirection::backward);
    auto yb = gauss_seidel_smooth(kt, gsb, &rhs, x0, exact_inner, kNoTruncation, SweepDirection::backward);
    Matrix upper = kd.triangularView<Eigen::Upper>();
    Vector refb = oracle::dense(x0) + upper.triangularView<Eigen::Upper>().solve(oracle::dense(rhs) - kd * oracle::dense(x0));
    CHECK((oracle::dense(yb) - refb).norm() <= 1e-9 * (1 + refb.norm()));

    // the stationary vector is a fixed point of a sweep
    auto kan3 = build_kanban(KanbanParams::uniform(3, 3, 1.0, 0.1));
    const Vector xs = oracle_stationary(oracle_generator(KanbanParams::uniform(3, 3, 1.0, 0.1)));
    const auto k3 = to_tt_matrix(kan3);
    const auto xs_tt = from_full(xs, kan3.row_dims());
    auto gs3 = GaussSeidelSmoother::from_operator(kan3);
    auto fixed = gauss_seidel_smooth(k3, gs3, nullptr, xs_tt, exact_inner, kNoTruncation);
    CHECK((oracle::dense(fixed) - xs).norm() <= 1e-10);

    // error to the stationary vector shrinks over successive sweeps in the Kanban split order
    auto gs3l = GaussSeidelSmoother::from_operator(kan3, SweepDirection::forward, SplitOrder::last_mode_major);
    auto it = scale(TTVector::ones(kan3.row_dims()), 1.0 / kan3.rows());
    double prev = (oracle::dense(it) - xs).norm();
    for (int s = 0; s < 3; ++s) {
        it = gauss_seidel_smooth(k3, gs3l, nullptr, it, InnerSolverConfig{}, TruncationPolicy::tolerance(1e-12));
        it = scale(it, 1.0 / sum(it));
        const double err = (oracle::dense(it) - xs).norm();
        CHECK(err < prev);
        prev = err;
    }

    // Jacobi scaling changes the inner iteration, not the sweep it converges to
    for (auto order : {SplitOrder::first_mode_major, SplitOrder::last_mode_major}) {
        auto plain = GaussSeidelSmoother::from_operator(kan3, SweepDirection::symmetric, order, false);
        auto scaled = GaussSeidelSmoother::from_operator(kan3, SweepDirection::symmetric, order, true);
        REQUIRE(scaled.dinv.has_value());
        auto start = oracle::random_tt(kan3.row_dims(), 3, rng);
        auto y0 = gauss_seidel_smooth(k3, plain, nullptr, start, exact_inner, kNoTruncation, SweepDirection::symmetric);
        auto y1 = gauss_seidel_smooth(k3, scaled, nullptr, start, exact_inner, kNoTruncation, SweepDirection::symmetric);
        CHECK((oracle::dense(y0) - oracle::dense(y1)).norm() <= 1e-9 * (1 + oracle::dense(y0).norm()));
    }
}

TEST_CASE("diagonal scaling", "[solver]") {
    std::mt19937_64 rng(33);
    for (auto op : {build_kanban(KanbanParams::uniform(3, 3, 1.0, 0.1)),
                    build_overflow(OverflowParams::uniform(3, 4, {1.2, 0.9, 0.6}, {1.0, 0.8, 1.1}))}) {
        const Matrix a = oracle::dense_operator(op);
        const Vector diag = a.diagonal();
        auto d = operator_diagonal(triangular_split(op).d);
        CHECK((oracle::dense(d) - diag).norm() <= 1e-13 * diag.norm());
        auto inv = reciprocal(d, op.norm1_bound(), 1e-10, TruncationPolicy::tolerance(1e-13));
        REQUIRE(inv.has_value());
        const Vector ref = diag.cwiseInverse();
        CHECK((oracle::dense(*inv) - ref).norm() <= 1e-9 * ref.norm());
    }
    // mixed signs: the iteration is not started inside its basin
    auto mixed = from_full(Vector::LinSpaced(6, -1.0, 2.0), {2, 3});
    CHECK_FALSE(reciprocal(mixed, 2.0, 1e-6, TruncationPolicy::tolerance(1e-13)).has_value());
}

TEST_CASE("coarsest-level pseudo-inverse", "[solver]") {
    std::mt19937_64 rng(33);
    Matrix a = Matrix::Identity(5, 5) * 3 + oracle::random_matrix(5, 5, rng);
    Vector r = oracle::random_vector(5, rng);
    CHECK((coarsest_solve(a, r) - a.fullPivLu().solve(r)).norm() <= 1e-12 * (1 + r.norm()));

    // two-state generator: solutions of A e = r form e_min + t (μ, λ); the minimum-norm one is ⟂ (μ, λ)
    const double l = 0.4, m = 1.6;
    Matrix g(2, 2);
    g << -l, m, l, -m;
    Vector rr(2);
    rr << 1.0, -1.0;
    Vector e = coarsest_solve(g, rr);
    CHECK((g * e - rr).norm() <= 1e-12);
    Vector null(2);
    null << m, l;
    CHECK(std::abs(e.dot(null)) <= 1e-12);
    CHECK(coarsest_solve(g, Vector::Zero(2)).norm() == 0.0);

    // residual against the projection onto range(A)
    auto gen = Matrix(oracle_generator(OverflowParams::uniform(2, 3, {1.0, 0.5}, {0.7, 1.2})));
    Vector rnd = oracle::random_vector(gen.rows(), rng);
    Eigen::JacobiSVD<Matrix> svd(gen, Eigen::ComputeFullU);
    Matrix u = svd.matrixU().leftCols(gen.rows() - 1);
    Vector proj = u * (u.transpose() * rnd);
    CHECK((gen * coarsest_solve(gen, rnd) - proj).norm() <= 1e-10 * rnd.norm());
}

TEST_CASE("bootstrap initial guess", "[solver]") {
    // single level: the guess is the stationary vector
    auto p = OverflowParams::uniform(2, 3, {1.0, 0.5}, {0.7, 1.2});
    HierarchyOptions one;
    one.coarsest_max = 1e9;
    auto h1 = build_hierarchy(build_overflow(p), one);
    REQUIRE(h1.num_levels() == 1);
    auto g1 = bootstrap_initial_guess(h1, TruncationPolicy::tolerance(1e-14));
    CHECK((oracle::dense(g1) - oracle_stationary(oracle_generator(p))).norm() <= 1e-12);

    auto op = build_overflow(OverflowParams::uniform(3, 4, {1.2, 0.9, 0.6}, {1.0, 0.8, 1.1}));
    auto h = build_hierarchy(op);
    auto g = bootstrap_initial_guess(h, TruncationPolicy::capped(1e-14, 30));
    CHECK(std::abs(sum(g) - 1.0) <= 1e-14);
    // dense construction: coarsest null vector through the interpolations
    Vector v = oracle::null_vector(oracle::dense_operator(h.coarsest().op));
    for (Index l = h.num_levels() - 2; l >= 0; --l) v = oracle::kron_all(h.levels[static_cast<std::size_t>(l)].transfer->p) * v;
    v /= v.sum();
    CHECK((oracle::dense(g) - v).norm() <= 1e-12 * v.norm());
}

TEST_CASE("V-cycle", "[solver]") {
    std::mt19937_64 rng(34);
    // two levels with GMRES run to exactness
    auto op = build_overflow(OverflowParams::uniform(2, 2, {1.2, 0.7}, {1.0, 1.3}));
    auto h = build_hierarchy(op);
    REQUIRE(h.num_levels() == 2);
    SolverConfig cfg;
    cfg.nu1 = cfg.nu2 = 9;
    MultigridContext ctx(h, cfg);
    auto z = oracle::random_tt({3, 3}, 2, rng);
    auto b = matvec_exact(h.finest().op_tt, z);
    auto x = vcycle(ctx, 0, &b, TTVector::zeros({3, 3}), kNoTruncation);
    CHECK(norm(subtract(b, matvec_exact(h.finest().op_tt, x))) <= 1e-10 * norm(b));

    // stationary vector is a fixed point of the homogeneous cycle
    auto p3 = OverflowParams::uniform(3, 4, {1.2, 0.9, 0.6}, {1.0, 0.8, 1.1});
    auto h3 = build_hierarchy(build_overflow(p3));
    MultigridContext ctx3(h3, SolverConfig{});
    auto xs = from_full(oracle_stationary(oracle_generator(p3)), {5, 5, 5});
    auto policy = TruncationPolicy::tolerance(1e-12);
    auto y = vcycle(ctx3, 0, nullptr, xs, policy);
    CHECK(norm(subtract(y, xs)) <= 1e-10 * norm(xs));

    // one cycle reduces the bootstrap residual
    auto p8 = OverflowParams::uniform(3, 8, {1.2, 1.0, 0.8}, {1.0, 1.0, 1.0});
    auto h8 = build_hierarchy(build_overflow(p8));
    MultigridContext ctx8(h8, SolverConfig{});
    auto pol8 = TruncationPolicy::capped(1e-10, 30);
    auto g = bootstrap_initial_guess(h8, pol8);
    const auto& a8 = h8.finest().op_tt;
    const double before = norm(matvec_exact(a8, g));
    auto g1 = vcycle(ctx8, 0, nullptr, g, pol8);
    g1 = scale(g1, 1.0 / sum(g1));
    CHECK(norm(matvec_exact(a8, g1)) * 1.5 <= before);
}

TEST_CASE("TT V-cycle without truncation equals the dense V-cycle", "[solver]") {
    auto op = build_overflow(OverflowParams::uniform(3, 4, {1.2, 0.9, 0.6}, {1.0, 0.8, 1.1}));
    auto h = build_hierarchy(op);
    REQUIRE(h.num_levels() == 3);
    SolverConfig cfg;
    cfg.nu1 = cfg.nu2 = 2;
    MultigridContext ctx(h, cfg);
    const auto dl = dense_levels(h);
    const Matrix pinv = dense_pinv(dl.back().a);
    auto x = scale(TTVector::ones(op.row_dims()), 1.0 / op.rows());
    Vector xd = oracle::dense(x);
    const Vector zero = Vector::Zero(xd.size());
    for (int c = 0; c < 3; ++c) {
        x = vcycle(ctx, 0, nullptr, x, kNoTruncation);
        x = scale(x, 1.0 / sum(x));
        xd = dense_vcycle(dl, pinv, 0, zero, xd, 2, 2);
        xd /= xd.sum();
        CHECK((oracle::dense(x) - xd).norm() <= 1e-9);
    }
}

TEST_CASE("solves agree with the stationary oracle", "[solver]") {
    SolverConfig cfg;
    cfg.tolerance = 1e-9;
    auto p = OverflowParams::uniform(3, 4, {1.2, 0.9, 0.6}, {1.0, 0.8, 1.1});
    auto h = build_hierarchy(build_overflow(p));
    auto r = solve_stationary(h, cfg, false);
    REQUIRE(r.report.converged());
    CHECK((oracle::dense(r.x) - oracle_stationary(oracle_generator(p))).norm() <= 1e-6);
    CHECK(std::abs(dot(r.x, TTVector::ones(r.x.dims())) - 1.0) <= 1e-12);

    SolverConfig gs;
    gs.smoother = SmootherKind::gauss_seidel;
    gs.nu1 = gs.nu2 = 1;
    gs.split_order = SplitOrder::last_mode_major;
    gs.tolerance = 1e-10;
    for (auto kp : {KanbanParams::uniform(2, 2, 1.0, 0.1), KanbanParams::uniform(3, 3, 1.0, 0.1),
                    KanbanParams{3, 3, {1.0, 0.5, 2.0}, {0.2, 0.4}}}) {
        auto hk = build_hierarchy(build_kanban(kp), kanban_options());
        auto rk = solve_stationary(hk, gs, false);
        REQUIRE(rk.report.converged());
        CHECK((oracle::dense(rk.x) - oracle_stationary(oracle_generator(kp))).norm() <= 1e-5);
    }

    // random start and Richardson smoothing still reach the solution
    SolverConfig rich = cfg;
    rich.smoother = SmootherKind::richardson;
    rich.nu1 = rich.nu2 = 4;
    rich.initial_guess = InitialGuess::random;
    rich.seed = 5;
    rich.max_cycles = 200;
    auto rr = solve_stationary(h, rich, false);
    REQUIRE(rr.report.converged());
    CHECK((oracle::dense(rr.x) - oracle_stationary(oracle_generator(p))).norm() <= 1e-5);
}

TEST_CASE("non-interacting queues converge to a rank-one tensor", "[solver]") {
    auto p = OverflowParams::uniform(3, 8, {0.6, 1.1, 1.9}, {1.0, 0.9, 1.2});
    p.coupled = false;
    auto h = build_hierarchy(build_overflow(p));
    SolverConfig cfg;
    cfg.tolerance = 1e-9;
    cfg.final_compression = true;
    auto r = solve_stationary(h, cfg, false);
    CHECK(r.report.converged());
    CHECK(r.x.max_rank() == 1);
    CHECK(r.report.final_residual < 1e-9);
}

TEST_CASE("report bookkeeping and determinism", "[solver]") {
    auto h = build_hierarchy(build_overflow(OverflowParams::uniform(3, 8, {1.2, 1.0, 0.8}, {1.0, 1.0, 1.0})));
    SolverConfig cfg;
    cfg.initial_max_rank = 4;
    cfg.max_cycles = 12;
    auto a = solve_stationary(h, cfg, false);
    auto b = solve_stationary(h, cfg, false);
    REQUIRE(a.report.records.size() == b.report.records.size());
    for (std::size_t i = 0; i < a.report.records.size(); ++i) {
        const auto& ra = a.report.records[i];
        const auto& rb = b.report.records[i];
        CHECK(ra.residual == rb.residual);
        CHECK(ra.max_rank == rb.max_rank);
        CHECK(ra.cycle == static_cast<Index>(i));
        CHECK(ra.residual >= 0.0);
        CHECK(ra.max_rank <= ra.rank_cap);
        CHECK(ra.elapsed_seconds == 0.0);
        if (i > 0) CHECK(ra.rank_cap >= a.report.records[i - 1].rank_cap);
    }
    CHECK(a.report.records.size() == static_cast<std::size_t>(a.report.cycles) + 1);
    CHECK(a.report.states == 729.0);
    CHECK(a.report.levels == 4);

    SolverConfig bad;
    bad.theta = 1.0;
    CHECK_THROWS_AS(solve_stationary(h, bad), Error);
    bad = SolverConfig{};
    bad.nu1 = bad.nu2 = 0;
    CHECK_THROWS_AS(solve_stationary(h, bad), Error);
    bad = SolverConfig{};
    bad.tolerance = 0.0;
    CHECK_THROWS_AS(solve_stationary(h, bad), Error);
}
