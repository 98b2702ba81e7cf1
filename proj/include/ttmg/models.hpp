#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <string>
#include <tuple>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "common.hpp"
#include "kron_op.hpp"

namespace ttmg {

inline constexpr double kOracleStateLimit = 50000;

// ---------------------------------------------------------------------------
// Overflow queuing network
// ---------------------------------------------------------------------------

/// Chain of finite queues; an arrival to a full queue i spills into queue i+1
/// when that one has room, otherwise it is lost.
struct OverflowParams {
    std::vector<Index> capacities;  // k_i, queue i holds 0..k_i customers
    std::vector<double> lambda;     // arrival rates
    std::vector<double> mu;         // service rates
    bool coupled = true;            // false: no overflow terms at all (non-interacting)

    Index queues() const { return static_cast<Index>(capacities.size()); }

    std::vector<Index> dims() const {
        std::vector<Index> d;
        for (auto k : capacities) d.push_back(k + 1);
        return d;
    }

    void validate() const {
        require(!capacities.empty(), "overflow: at least one queue required");
        require(lambda.size() == capacities.size() && mu.size() == capacities.size(),
                "overflow: rate vectors must have one entry per queue");
        for (auto k : capacities) require(k >= 1, "overflow: capacities must be at least 1");
        for (auto l : lambda) require(l > 0.0 && std::isfinite(l), "overflow: arrival rates must be positive");
        for (auto m : mu) require(m > 0.0 && std::isfinite(m), "overflow: service rates must be positive");
    }

    static OverflowParams uniform(Index queues, Index capacity, std::vector<double> lambda, std::vector<double> mu) {
        return {std::vector<Index>(static_cast<std::size_t>(queues), capacity), std::move(lambda), std::move(mu), true};
    }
};

inline KroneckerSumOperator build_overflow(const OverflowParams& p) {
    p.validate();
    const auto dims = p.dims();
    const auto J = dims.size();
    auto identities = [&] {
        std::vector<Matrix> f;
        for (auto n : dims) f.push_back(Matrix::Identity(n, n));
        return f;
    };
    KroneckerSumOperator op(dims);
    for (std::size_t i = 0; i < J; ++i) {
        const Index n = dims[i];
        Matrix e = Matrix::Zero(n, n);
        for (Index s = 0; s + 1 < n; ++s) {
            e(s + 1, s) = p.lambda[i];  // arrival
            e(s, s + 1) = p.mu[i];      // service
        }
        auto f = identities();
        f[i] = e;
        op.add_term(std::move(f));
    }
    if (p.coupled) {
        for (std::size_t i = 0; i + 1 < J; ++i) {
            Matrix leave = Matrix::Zero(dims[i], dims[i]);
            leave(dims[i] - 1, dims[i] - 1) = p.lambda[i];
            Matrix enter = Matrix::Zero(dims[i + 1], dims[i + 1]);
            for (Index s = 0; s + 1 < dims[i + 1]; ++s) enter(s + 1, s) = 1.0;
            auto f = identities();
            f[i] = leave;
            f[i + 1] = enter;
            op.add_term(std::move(f));
        }
    }
    return merge_terms(complete_generator(op));
}

// ---------------------------------------------------------------------------
// Kanban manufacturing line
// ---------------------------------------------------------------------------

enum class MachinePosition { first, middle, last };

/// (available tickets, parts in process, parts waiting in the output hopper)
struct KanbanState {
    Index a = 0, b = 0, c = 0;
    friend bool operator==(const KanbanState&, const KanbanState&) = default;
    friend auto operator<=>(const KanbanState&, const KanbanState&) = default;
};

struct KanbanParams {
    Index machines = 2;
    Index tickets = 1;           // uniform k
    std::vector<double> mu;      // processing rates, one per machine
    std::vector<double> omega;   // transfer rate from machine i to i+1

    void validate() const {
        require(machines >= 2, "kanban: at least two machines required");
        require(tickets >= 1, "kanban: at least one ticket required");
        require(static_cast<Index>(mu.size()) == machines, "kanban: one processing rate per machine");
        require(static_cast<Index>(omega.size()) == machines - 1, "kanban: one transfer rate per machine pair");
        for (auto m : mu) require(m > 0.0 && std::isfinite(m), "kanban: processing rates must be positive");
        for (auto w : omega) require(w > 0.0 && std::isfinite(w), "kanban: transfer rates must be positive");
    }

    /// Ticket counts 2^m + 1 (m ≥ 1) admit the triangle aggregation hierarchy.
    bool aggregation_compatible() const {
        const Index k = tickets - 1;
        return k >= 2 && (k & (k - 1)) == 0;
    }

    static KanbanParams uniform(Index machines, Index tickets, double mu, double omega) {
        return {machines, tickets, std::vector<double>(static_cast<std::size_t>(machines), mu),
                std::vector<double>(static_cast<std::size_t>(machines - 1), omega)};
    }
};

inline MachinePosition machine_position(Index i, Index machines) {
    if (i == 0) return MachinePosition::first;
    if (i == machines - 1) return MachinePosition::last;
    return MachinePosition::middle;
}

/// States of one machine in the lexicographic triangle order (a descending, then
/// b descending).  The first machine keeps the a = 0 edge, the last machine the
/// c = 0 row, both in the induced order.
inline std::vector<KanbanState> enumerate_kanban_states(Index k, MachinePosition position) {
    require(k >= 1, "kanban states: at least one ticket required");
    std::vector<KanbanState> states;
    for (Index a = k; a >= 0; --a)
        for (Index b = k - a; b >= 0; --b) {
            const KanbanState s{a, b, k - a - b};
            if (position == MachinePosition::first && s.a != 0) continue;
            if (position == MachinePosition::last && s.c != 0) continue;
            states.push_back(s);
        }
    return states;
}

inline Index kanban_state_count(Index k, MachinePosition position) {
    return position == MachinePosition::middle ? (k + 1) * (k + 2) / 2 : k + 1;
}

inline double kanban_global_size(Index machines, Index k) {
    return std::pow(static_cast<double>(k + 1), 2.0) *
           std::pow(static_cast<double>((k + 1) * (k + 2) / 2), static_cast<double>(machines - 2));
}

namespace detail {

inline Index state_index(const std::vector<KanbanState>& states, const KanbanState& s) {
    auto it = std::find(states.begin(), states.end(), s);
    require(it != states.end(), "kanban: transition leaves the state space");
    return static_cast<Index>(it - states.begin());
}

/// Matrix with entry `rate` at (to, from) for every state where `move` applies.
template <typename Move>
Matrix kanban_factor(const std::vector<KanbanState>& states, double rate, Move move) {
    const auto n = static_cast<Index>(states.size());
    Matrix e = Matrix::Zero(n, n);
    for (Index from = 0; from < n; ++from) {
        KanbanState to;
        if (move(states[static_cast<std::size_t>(from)], to)) e(state_index(states, to), from) += rate;
    }
    return e;
}

}  // namespace detail

/// Local processing factor: (a,b,c) → (a,b−1,c+1), or (a+1,b−1,0) on the last
/// machine, with −μ on the diagonal of active columns.
inline Matrix kanban_local_matrix(Index k, MachinePosition position, double mu) {
    const auto states = enumerate_kanban_states(k, position);
    const bool last = position == MachinePosition::last;
    Matrix e = detail::kanban_factor(states, mu, [&](const KanbanState& s, KanbanState& t) {
        if (s.b == 0) return false;
        t = last ? KanbanState{s.a + 1, s.b - 1, 0} : KanbanState{s.a, s.b - 1, s.c + 1};
        return true;
    });
    e.diagonal() = -e.colwise().sum().transpose();
    return e;
}

/// Hopper side of a part transfer, carrying ω: (a,b,c) → (a+1,b,c−1).  On the
/// first machine the returned ticket is taken immediately by a new part.
inline Matrix kanban_send_matrix(Index k, MachinePosition position, double omega) {
    const auto states = enumerate_kanban_states(k, position);
    const bool first = position == MachinePosition::first;
    return detail::kanban_factor(states, omega, [&](const KanbanState& s, KanbanState& t) {
        if (s.c == 0) return false;
        t = first ? KanbanState{0, s.b + 1, s.c - 1} : KanbanState{s.a + 1, s.b, s.c - 1};
        return true;
    });
}

/// Receiving side of a part transfer, unit entries: (a,b,c) → (a−1,b+1,c).
inline Matrix kanban_receive_matrix(Index k, MachinePosition position) {
    const auto states = enumerate_kanban_states(k, position);
    return detail::kanban_factor(states, 1.0, [&](const KanbanState& s, KanbanState& t) {
        if (s.a == 0) return false;
        t = KanbanState{s.a - 1, s.b + 1, s.c};
        return true;
    });
}

inline KroneckerSumOperator build_kanban(const KanbanParams& p) {
    p.validate();
    const Index J = p.machines;
    const Index k = p.tickets;
    std::vector<Index> dims;
    for (Index i = 0; i < J; ++i) dims.push_back(kanban_state_count(k, machine_position(i, J)));
    auto identities = [&] {
        std::vector<Matrix> f;
        for (auto n : dims) f.push_back(Matrix::Identity(n, n));
        return f;
    };
    KroneckerSumOperator op(dims);
    for (Index i = 0; i < J; ++i) {
        auto f = identities();
        f[static_cast<std::size_t>(i)] = kanban_local_matrix(k, machine_position(i, J), p.mu[static_cast<std::size_t>(i)]);
        op.add_term(std::move(f));
    }
    for (Index i = 0; i + 1 < J; ++i) {
        auto f = identities();
        f[static_cast<std::size_t>(i)] = kanban_send_matrix(k, machine_position(i, J), p.omega[static_cast<std::size_t>(i)]);
        f[static_cast<std::size_t>(i + 1)] = kanban_receive_matrix(k, machine_position(i + 1, J));
        op.add_term(std::move(f));
    }
    return merge_terms(complete_generator(op));
}

// ---------------------------------------------------------------------------
// Enumeration oracles (no Kronecker machinery)
// ---------------------------------------------------------------------------

namespace detail {

inline SparseMatrix generator_from_transitions(Index n, std::vector<Eigen::Triplet<double>>& offdiag) {
    std::vector<double> out(static_cast<std::size_t>(n), 0.0);
    for (const auto& t : offdiag) out[static_cast<std::size_t>(t.col())] += t.value();
    for (Index s = 0; s < n; ++s) offdiag.emplace_back(s, s, -out[static_cast<std::size_t>(s)]);
    SparseMatrix a(n, n);
    a.setFromTriplets(offdiag.begin(), offdiag.end());
    a.prune(0.0);
    return a;
}

}  // namespace detail

inline SparseMatrix oracle_generator(const OverflowParams& p) {
    p.validate();
    const auto dims = p.dims();
    require(product(dims) <= kOracleStateLimit, "oracle_generator: too many states for enumeration");
    const Index n = product_exact(dims);
    const auto J = dims.size();
    std::vector<Eigen::Triplet<double>> trans;
    for (Index from = 0; from < n; ++from) {
        const auto s = multi_index(from, dims);
        for (std::size_t i = 0; i < J; ++i) {
            auto t = s;
            if (s[i] < p.capacities[i]) {
                t[i] += 1;
                trans.emplace_back(linear_index(t, dims), from, p.lambda[i]);
            } else if (p.coupled && i + 1 < J && s[i + 1] < p.capacities[i + 1]) {
                t[i + 1] += 1;
                trans.emplace_back(linear_index(t, dims), from, p.lambda[i]);
            }
            if (s[i] > 0) {
                auto u = s;
                u[i] -= 1;
                trans.emplace_back(linear_index(u, dims), from, p.mu[i]);
            }
        }
    }
    return detail::generator_from_transitions(n, trans);
}

inline SparseMatrix oracle_generator(const KanbanParams& p) {
    p.validate();
    const Index J = p.machines;
    const Index k = p.tickets;
    std::vector<std::vector<KanbanState>> states;
    std::vector<Index> dims;
    for (Index i = 0; i < J; ++i) {
        states.push_back(enumerate_kanban_states(k, machine_position(i, J)));
        dims.push_back(static_cast<Index>(states.back().size()));
    }
    require(product(dims) <= kOracleStateLimit, "oracle_generator: too many states for enumeration");
    const Index n = product_exact(dims);
    std::vector<Eigen::Triplet<double>> trans;
    auto encode = [&](const std::vector<KanbanState>& g) {
        std::vector<Index> idx;
        for (Index i = 0; i < J; ++i)
            idx.push_back(detail::state_index(states[static_cast<std::size_t>(i)], g[static_cast<std::size_t>(i)]));
        return linear_index(idx, dims);
    };
    for (Index from = 0; from < n; ++from) {
        const auto idx = multi_index(from, dims);
        std::vector<KanbanState> g;
        for (Index i = 0; i < J; ++i)
            g.push_back(states[static_cast<std::size_t>(i)][static_cast<std::size_t>(idx[static_cast<std::size_t>(i)])]);
        for (Index i = 0; i < J; ++i) {
            const auto si = static_cast<std::size_t>(i);
            // processing finishes
            if (g[si].b > 0) {
                auto h = g;
                h[si].b -= 1;
                if (i == J - 1)
                    h[si].a += 1;  // no output hopper: ticket freed at once
                else
                    h[si].c += 1;
                trans.emplace_back(encode(h), from, p.mu[si]);
            }
            // finished part moves on to machine i+1, which must have a ticket
            if (i + 1 < J && g[si].c > 0 && g[si + 1].a > 0) {
                auto h = g;
                h[si].c -= 1;
                if (i == 0)
                    h[si].b += 1;  // freed ticket is used by a new part immediately
                else
                    h[si].a += 1;
                h[si + 1].a -= 1;
                h[si + 1].b += 1;
                trans.emplace_back(encode(h), from, p.omega[si]);
            }
        }
    }
    return detail::generator_from_transitions(n, trans);
}

/// Strong connectivity of the transition graph (edge j → i when A(i,j) > 0).
inline bool is_irreducible(const SparseMatrix& a) {
    const Index n = a.rows();
    if (n == 0) return false;
    SparseMatrix at = a.transpose();
    auto reach_all = [n](const SparseMatrix& m) {
        // m stored column-major: column j lists targets i of edge j → i
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        std::queue<Index> q;
        q.push(0);
        seen[0] = 1;
        Index count = 1;
        while (!q.empty()) {
            const Index j = q.front();
            q.pop();
            for (SparseMatrix::InnerIterator it(m, j); it; ++it) {
                if (it.row() == j || it.value() <= 0.0) continue;
                if (!seen[static_cast<std::size_t>(it.row())]) {
                    seen[static_cast<std::size_t>(it.row())] = 1;
                    ++count;
                    q.push(it.row());
                }
            }
        }
        return count == n;
    };
    return reach_all(a) && reach_all(at);
}

/// Stationary vector of an irreducible generator, normalized to 1ᵀx = 1.
/// Small systems use the null vector of a full SVD (corank checked); larger
/// ones replace one balance equation by the normalization and use sparse LU.
inline Vector oracle_stationary(const SparseMatrix& a, double dense_limit = kDefaultDenseLimit) {
    const Index n = a.rows();
    require(n == a.cols() && n >= 1, "oracle_stationary: generator must be square");
    require(static_cast<double>(n) <= kOracleStateLimit, "oracle_stationary: too many states");
    Vector x;
    if (static_cast<double>(n) * static_cast<double>(n) <= dense_limit) {
        Matrix dense(a);
        Eigen::BDCSVD<Matrix> svd(dense, Eigen::ComputeFullV);
        const Vector& s = svd.singularValues();
        if (n >= 2 && s(n - 2) <= 1e-12 * s(0))
            throw Error("oracle_stationary: generator is rank deficient beyond corank one");
        x = svd.matrixV().col(n - 1);
    } else {
        SparseMatrix m = a;
        m.makeCompressed();
        std::vector<Eigen::Triplet<double>> trip;
        for (Index col = 0; col < m.outerSize(); ++col)
            for (SparseMatrix::InnerIterator it(m, col); it; ++it)
                if (it.row() != n - 1) trip.emplace_back(it.row(), it.col(), it.value());
        for (Index col = 0; col < n; ++col) trip.emplace_back(n - 1, col, 1.0);
        SparseMatrix sys(n, n);
        sys.setFromTriplets(trip.begin(), trip.end());
        Eigen::SparseLU<SparseMatrix> lu;
        lu.compute(sys);
        require(lu.info() == Eigen::Success, "oracle_stationary: sparse factorization failed");
        Vector rhs = Vector::Zero(n);
        rhs(n - 1) = 1.0;
        x = lu.solve(rhs);
    }
    const double s = x.sum();
    require(s != 0.0, "oracle_stationary: null vector has zero sum");
    return x / s;
}

inline Vector oracle_stationary(const Matrix& a) {
    SparseMatrix s = a.sparseView();
    return oracle_stationary(s);
}

}  // namespace ttmg
