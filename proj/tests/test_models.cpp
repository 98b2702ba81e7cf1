#include <set>

#include "catch_amalgamated.hpp"
#include "oracles.hpp"
#include "ttmg/models.hpp"

using namespace ttmg;

namespace {

Matrix mat(Index rows, Index cols, std::initializer_list<double> row_major) {
    Matrix m(rows, cols);
    auto it = row_major.begin();
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j) m(i, j) = *it++;
    return m;
}

double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

std::vector<OverflowParams> overflow_instances() {
    return {OverflowParams::uniform(1, 1, {0.7}, {1.3}),
            OverflowParams::uniform(1, 4, {1.1}, {0.6}),
            OverflowParams::uniform(2, 2, {1.0, 1.0}, {1.0, 1.0}),
            OverflowParams::uniform(2, 4, {1.5, 0.5}, {0.8, 1.2}),
            OverflowParams::uniform(3, 2, {1.2, 1.0, 0.8}, {1.0, 1.0, 1.0}),
            OverflowParams::uniform(3, 4, {1.2, 0.9, 0.6}, {1.0, 0.8, 1.1}),
            OverflowParams{{2, 3, 4}, {0.5, 2.0, 1.0}, {1.0, 0.3, 0.7}, true},
            OverflowParams::uniform(4, 3, {1.0, 1.1, 1.2, 1.3}, {0.9, 1.0, 1.0, 1.1})};
}

std::vector<KanbanParams> kanban_instances() {
    return {KanbanParams::uniform(2, 1, 1.0, 0.1), KanbanParams::uniform(2, 2, 1.0, 0.1),
            KanbanParams{2, 3, {0.5, 2.0}, {0.7}}, KanbanParams::uniform(3, 1, 1.0, 0.5),
            KanbanParams::uniform(3, 2, 1.0, 0.1), KanbanParams{3, 2, {1.0, 0.4, 2.0}, {0.3, 1.5}},
            KanbanParams::uniform(3, 5, 1.0, 0.1), KanbanParams::uniform(4, 2, 1.0, 0.2)};
}

}  // namespace

TEST_CASE("overflow generator by hand", "[models]") {
    auto a = assemble_dense(build_overflow(OverflowParams::uniform(1, 2, {1.0}, {1.0})));
    Matrix expected = mat(3, 3, {-1, 1, 0,  //
                                 1, -2, 1,  //
                                 0, 1, -1});
    CHECK(max_abs(a - expected) <= 1e-15);
    auto g = Matrix(oracle_generator(OverflowParams::uniform(1, 1, {0.7}, {1.3})));
    CHECK(max_abs(g - mat(2, 2, {-0.7, 1.3, 0.7, -1.3})) <= 1e-15);
    CHECK(build_overflow(OverflowParams::uniform(3, 8, {1.0, 1.0, 1.0}, {1.0, 1.0, 1.0})).rows() == 729.0);
}

TEST_CASE("Kronecker models agree with the enumeration oracles", "[models]") {
    for (const auto& p : overflow_instances()) {
        const Matrix kron = oracle::dense_operator(build_overflow(p));
        const Matrix enumerated(oracle_generator(p));
        CHECK(max_abs(kron - enumerated) <= 1e-13);
        CHECK(max_abs(enumerated.colwise().sum()) <= 1e-13);
        CHECK(is_irreducible(oracle_generator(p)));
    }
    for (const auto& p : kanban_instances()) {
        const Matrix kron = oracle::dense_operator(build_kanban(p));
        const Matrix enumerated(oracle_generator(p));
        CHECK(kron.rows() == static_cast<Index>(kanban_global_size(p.machines, p.tickets)));
        CHECK(max_abs(kron - enumerated) <= 1e-13);
        CHECK(max_abs(enumerated.colwise().sum()) <= 1e-13);
        CHECK(is_irreducible(oracle_generator(p)));
    }
}

TEST_CASE("Kanban state triangle", "[models]") {
    auto s = enumerate_kanban_states(2, MachinePosition::middle);
    std::vector<KanbanState> expected{{2, 0, 0}, {1, 1, 0}, {1, 0, 1}, {0, 2, 0}, {0, 1, 1}, {0, 0, 2}};
    CHECK(s == expected);
    CHECK(enumerate_kanban_states(1, MachinePosition::middle) ==
          std::vector<KanbanState>{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}});
    CHECK(enumerate_kanban_states(5, MachinePosition::middle).size() == 21);
    for (Index k = 1; k <= 9; ++k) {
        auto mid = enumerate_kanban_states(k, MachinePosition::middle);
        auto first = enumerate_kanban_states(k, MachinePosition::first);
        auto last = enumerate_kanban_states(k, MachinePosition::last);
        CHECK(static_cast<Index>(mid.size()) == (k + 1) * (k + 2) / 2);
        CHECK(static_cast<Index>(first.size()) == k + 1);
        CHECK(static_cast<Index>(last.size()) == k + 1);
        CHECK(std::set<KanbanState>(mid.begin(), mid.end()).size() == mid.size());
        for (const auto& st : first) CHECK(st.a == 0);
        for (const auto& st : last) CHECK(st.c == 0);
        for (const auto& st : mid) CHECK(st.a + st.b + st.c == k);
    }
    CHECK(kanban_global_size(3, 5) == 756.0);
    CHECK(kanban_global_size(6, 3) == 160000.0);
    CHECK(build_kanban(KanbanParams::uniform(3, 5, 1.0, 0.1)).rows() == 756.0);
}

TEST_CASE("Kanban factors for two tickets", "[models]") {
    const double mu = 1.7, w = 0.3;
    Matrix local = mat(6, 6, {0, 0, 0, 0, 0, 0,      //
                              0, -mu, 0, 0, 0, 0,    //
                              0, mu, 0, 0, 0, 0,     //
                              0, 0, 0, -mu, 0, 0,    //
                              0, 0, 0, mu, -mu, 0,   //
                              0, 0, 0, 0, mu, 0});
    Matrix receive = mat(6, 6, {0, 0, 0, 0, 0, 0,  //
                                1, 0, 0, 0, 0, 0,  //
                                0, 0, 0, 0, 0, 0,  //
                                0, 1, 0, 0, 0, 0,  //
                                0, 0, 1, 0, 0, 0,  //
                                0, 0, 0, 0, 0, 0});
    Matrix send = mat(6, 6, {0, 0, w, 0, 0, 0,  //
                             0, 0, 0, 0, w, 0,  //
                             0, 0, 0, 0, 0, w,  //
                             0, 0, 0, 0, 0, 0,  //
                             0, 0, 0, 0, 0, 0,  //
                             0, 0, 0, 0, 0, 0});
    CHECK(max_abs(kanban_local_matrix(2, MachinePosition::middle, mu) - local) == 0.0);
    CHECK(max_abs(kanban_receive_matrix(2, MachinePosition::middle) - receive) == 0.0);
    CHECK(max_abs(kanban_send_matrix(2, MachinePosition::middle, w) - send) == 0.0);
    CHECK(max_abs(kanban_local_matrix(2, MachinePosition::middle, mu).colwise().sum()) <= 1e-15);
}

TEST_CASE("parameter validation", "[models]") {
    CHECK_THROWS_AS(build_overflow(OverflowParams::uniform(2, 3, {1.0, -1.0}, {1.0, 1.0})), Error);
    CHECK_THROWS_AS(build_overflow(OverflowParams::uniform(2, 0, {1.0, 1.0}, {1.0, 1.0})), Error);
    CHECK_THROWS_AS(build_overflow(OverflowParams::uniform(2, 3, {1.0}, {1.0, 1.0})), Error);
    CHECK_THROWS_AS(build_kanban(KanbanParams::uniform(1, 3, 1.0, 0.1)), Error);
    CHECK_THROWS_AS(build_kanban(KanbanParams::uniform(3, 3, 1.0, 0.0)), Error);
    CHECK(KanbanParams::uniform(3, 3, 1.0, 0.1).aggregation_compatible());
    CHECK(KanbanParams::uniform(3, 17, 1.0, 0.1).aggregation_compatible());
    CHECK_FALSE(KanbanParams::uniform(3, 4, 1.0, 0.1).aggregation_compatible());
    CHECK_THROWS_AS(oracle_generator(OverflowParams::uniform(6, 8, {1.0, 1, 1, 1, 1, 1}, {1.0, 1, 1, 1, 1, 1})),
                    Error);
}

TEST_CASE("stationary oracle", "[models]") {
    const double l = 0.7, m = 1.3;
    Vector x = oracle_stationary(Matrix(mat(2, 2, {-l, m, l, -m})));
    CHECK(std::abs(x(0) - m / (l + m)) <= 1e-14);
    CHECK(std::abs(x(1) - l / (l + m)) <= 1e-14);

    auto p = OverflowParams::uniform(3, 4, {1.2, 0.9, 0.6}, {1.0, 0.8, 1.1});
    auto g = oracle_generator(p);
    Vector s = oracle_stationary(g);
    const Matrix gd(g);
    CHECK((gd * s).norm() <= 1e-12 * gd.norm());
    CHECK(s.minCoeff() >= 0.0);
    CHECK(std::abs(s.sum() - 1.0) <= 1e-14);
    // sparse path against the dense one
    Vector s_sparse = oracle_stationary(g, 0.0);
    CHECK((s_sparse - s).norm() <= 1e-12);

    Matrix reducible = Matrix::Zero(3, 3);
    reducible(1, 0) = 1;
    reducible(0, 0) = -1;
    CHECK_FALSE(is_irreducible(reducible.sparseView()));
    CHECK_THROWS_AS(oracle_stationary(Matrix(Matrix::Zero(3, 3))), Error);
}

TEST_CASE("non-interacting queues have a rank-one stationary tensor", "[models]") {
    OverflowParams p = OverflowParams::uniform(3, 5, {0.6, 1.1, 1.9}, {1.0, 0.9, 1.2});
    p.coupled = false;
    auto op = build_overflow(p);
    for (const auto& t : op.terms()) {
        Index non_identity = 0;
        for (const auto& f : t.factors) non_identity += f.isIdentity() ? 0 : 1;
        CHECK(non_identity <= 1);
    }
    std::vector<Vector> local;
    for (std::size_t i = 0; i < 3; ++i) local.push_back(oracle::birth_death_stationary(6, p.lambda[i], p.mu[i]));
    auto x = from_elementary(local);
    CHECK(norm(matvec_exact(to_tt_matrix(op), x)) <= 1e-10);
    // J = 2 against the oracle
    OverflowParams q = OverflowParams::uniform(2, 4, {0.8, 1.4}, {1.0, 0.7});
    q.coupled = false;
    Vector s = oracle_stationary(oracle_generator(q));
    Vector expected = oracle::kron_all(std::vector<Vector>{oracle::birth_death_stationary(5, 0.8, 1.0),
                                                           oracle::birth_death_stationary(5, 1.4, 0.7)});
    CHECK((s - expected).norm() <= 1e-12);
}
