#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "common.hpp"
#include "kron_op.hpp"
#include "models.hpp"
#include "tt_core.hpp"

namespace ttmg {

enum class CoarseningStrategy { overflow, kanban };
enum class InterpolationKind { linear, direct };

inline std::string to_string(CoarseningStrategy s) { return s == CoarseningStrategy::overflow ? "overflow" : "kanban"; }
inline std::string to_string(InterpolationKind k) { return k == InterpolationKind::linear ? "linear" : "direct"; }

/// Per-mode interpolation P_j (n_j × n_j^c) and restriction Q_j (n_j^c × n_j).
struct TransferPair {
    std::vector<Matrix> p;
    std::vector<Matrix> q;
};

struct GridLevel {
    KroneckerSumOperator op;
    TTMatrix op_tt;                       // same operator, compressed TT-matrix form
    std::optional<TransferPair> transfer; // to the next coarser level
    std::vector<Index> dims;
};

struct GridHierarchy {
    CoarseningStrategy strategy = CoarseningStrategy::overflow;
    std::vector<GridLevel> levels;
    Matrix coarsest_dense;

    Index num_levels() const { return static_cast<Index>(levels.size()); }
    const GridLevel& finest() const { return levels.front(); }
    const GridLevel& coarsest() const { return levels.back(); }
};

struct HierarchyOptions {
    CoarseningStrategy strategy = CoarseningStrategy::overflow;
    InterpolationKind interpolation = InterpolationKind::linear;
    double coarsest_max = 0.0;               // stop once the global size fits; 0 = coarsen until exhausted
    double dense_limit = kDefaultDenseLimit; // entries allowed in the coarsest dense assembly
};

// ---------------------------------------------------------------------------
// Chain factors
// ---------------------------------------------------------------------------

/// Even-indexed points of an odd chain; the endpoints are always coarse.
inline std::vector<Index> full_coarsen_chain(Index n) {
    require(n >= 3 && n % 2 == 1, "full_coarsen_chain: chain length must be odd and at least 3");
    std::vector<Index> coarse;
    for (Index i = 0; i < n; i += 2) coarse.push_back(i);
    return coarse;
}

inline Matrix linear_interpolation(Index n) {
    const auto coarse = full_coarsen_chain(n);
    const auto nc = static_cast<Index>(coarse.size());
    Matrix p = Matrix::Zero(n, nc);
    for (Index c = 0; c < nc; ++c) p(2 * c, c) = 1.0;
    for (Index i = 1; i < n; i += 2) {
        p(i, i / 2) = 0.5;
        p(i, i / 2 + 1) = 0.5;
    }
    return p;
}

/// Linear interpolation and its transpose as restriction.  Each fine point gives
/// weight 1 in total to the coarse points it interpolates from, so 1ᵀQ = 1ᵀ.
inline TransferPair linear_transfer(Index n) {
    Matrix p = linear_interpolation(n);
    return {{p}, {p.transpose()}};
}

/// Interpolation weights from the magnitudes of row couplings to coarse points in
/// the local matrix.  Rows without any coarse coupling use linear weights.
inline Matrix direct_interpolation(const Matrix& e_local, const std::vector<Index>& coarse) {
    const Index n = e_local.rows();
    require(e_local.cols() == n, "direct_interpolation: local matrix must be square");
    const auto nc = static_cast<Index>(coarse.size());
    std::vector<Index> slot(static_cast<std::size_t>(n), -1);
    for (Index c = 0; c < nc; ++c) {
        const Index i = coarse[static_cast<std::size_t>(c)];
        require(i >= 0 && i < n && slot[static_cast<std::size_t>(i)] < 0, "direct_interpolation: invalid coarse map");
        slot[static_cast<std::size_t>(i)] = c;
    }
    Matrix p = Matrix::Zero(n, nc);
    for (Index i = 0; i < n; ++i) {
        if (slot[static_cast<std::size_t>(i)] >= 0) {
            p(i, slot[static_cast<std::size_t>(i)]) = 1.0;
            continue;
        }
        double total = 0.0;
        for (Index c = 0; c < nc; ++c) {
            const double w = std::abs(e_local(i, coarse[static_cast<std::size_t>(c)]));
            p(i, c) = w;
            total += w;
        }
        if (total > 0.0) {
            p.row(i) /= total;
            continue;
        }
        // fallback: average of the nearest coarse neighbours on each side
        p.row(i).setZero();
        Index left = -1, right = -1;
        for (Index c = 0; c < nc; ++c) {
            const Index pt = coarse[static_cast<std::size_t>(c)];
            if (pt < i) left = c;
            if (pt > i && right < 0) right = c;
        }
        if (left >= 0 && right >= 0) {
            p(i, left) = 0.5;
            p(i, right) = 0.5;
        } else {
            p(i, left >= 0 ? left : right) = 1.0;
        }
    }
    return p;
}

// ---------------------------------------------------------------------------
// Triangle factors
// ---------------------------------------------------------------------------

/// Fine state → coarse state index for one coarsening step of a Kanban factor
/// with k tickets.  k = 2 is the final step onto three (middle) or two (end)
/// states; larger k must be of the form 2^m + 1 and halves the triangle.
inline std::vector<Index> triangle_aggregation(Index k, MachinePosition position = MachinePosition::middle) {
    const auto fine = enumerate_kanban_states(k, position);
    std::vector<Index> map;
    if (k == 2) {
        if (position == MachinePosition::middle)
            map = {0, 0, 2, 1, 1, 2};  // {1,2}, {4,5}, {3,6} in 1-based numbering
        else
            map = {0, 0, 1};
        return map;
    }
    require(k >= 3 && ((k - 1) & (k - 2)) == 0, "triangle_aggregation: ticket count must be 2^m + 1 with m >= 1");
    const Index kc = (k + 1) / 2;
    const auto coarse = enumerate_kanban_states(kc, position);
    for (const auto& s : fine) {
        const Index b = (s.b + 1) / 2;
        const Index c = (s.c + 1) / 2;
        const KanbanState t{kc - b - c, b, c};
        map.push_back(detail::state_index(coarse, t));
    }
    return map;
}

inline Index coarse_ticket_count(Index k) {
    require(k >= 2, "coarse_ticket_count: no coarser level below two tickets");
    return k == 2 ? 1 : (k + 1) / 2;
}

/// Boolean membership interpolation; restriction is its transpose.
inline TransferPair aggregation_operators(const std::vector<Index>& map) {
    require(!map.empty(), "aggregation_operators: empty map");
    const Index nc = *std::max_element(map.begin(), map.end()) + 1;
    std::vector<char> hit(static_cast<std::size_t>(nc), 0);
    Matrix p = Matrix::Zero(static_cast<Index>(map.size()), nc);
    for (std::size_t i = 0; i < map.size(); ++i) {
        require(map[i] >= 0, "aggregation_operators: negative aggregate index");
        p(static_cast<Index>(i), map[i]) = 1.0;
        hit[static_cast<std::size_t>(map[i])] = 1;
    }
    require(std::all_of(hit.begin(), hit.end(), [](char h) { return h != 0; }),
            "aggregation_operators: aggregate indices must be contiguous");
    return {{p}, {p.transpose()}};
}

// ---------------------------------------------------------------------------
// Hierarchy
// ---------------------------------------------------------------------------

namespace detail {

inline Index kanban_tickets_from_dims(const std::vector<Index>& dims) {
    require(dims.size() >= 2, "kanban hierarchy: at least two machines required");
    const Index k = dims.front() - 1;
    require(k >= 1 && dims.back() == k + 1, "kanban hierarchy: end factors must have k+1 states");
    for (std::size_t j = 1; j + 1 < dims.size(); ++j)
        require(dims[j] == kanban_state_count(k, MachinePosition::middle),
                "kanban hierarchy: middle factors must have (k+1)(k+2)/2 states");
    return k;
}

/// Transfers for one coarsening step, or nothing when every factor is exhausted.
inline std::optional<TransferPair> next_transfer(const KroneckerSumOperator& op, const HierarchyOptions& opt) {
    const auto& dims = op.row_dims();
    const auto J = static_cast<Index>(dims.size());
    TransferPair t;
    bool any = false;
    if (opt.strategy == CoarseningStrategy::overflow) {
        for (Index j = 0; j < J; ++j) {
            const Index n = dims[static_cast<std::size_t>(j)];
            if (n <= 2) {
                t.p.push_back(Matrix::Identity(n, n));
                t.q.push_back(Matrix::Identity(n, n));
                continue;
            }
            require(n % 2 == 1, "overflow hierarchy: chain factors of even length cannot be coarsened");
            Matrix p = opt.interpolation == InterpolationKind::linear
                           ? linear_interpolation(n)
                           : direct_interpolation(aux_local_matrix(op, j), full_coarsen_chain(n));
            t.q.push_back(linear_interpolation(n).transpose());
            t.p.push_back(std::move(p));
            any = true;
        }
    } else {
        const Index k = kanban_tickets_from_dims(dims);
        if (k < 2) return std::nullopt;
        for (Index j = 0; j < J; ++j) {
            auto pair = aggregation_operators(triangle_aggregation(k, machine_position(j, J)));
            t.p.push_back(std::move(pair.p[0]));
            t.q.push_back(std::move(pair.q[0]));
        }
        any = true;
    }
    if (!any) return std::nullopt;
    return t;
}

}  // namespace detail

inline GridHierarchy build_hierarchy(const KroneckerSumOperator& a, const HierarchyOptions& opt = {}) {
    require(a.square(), "build_hierarchy: operator must be square");
    GridHierarchy h;
    h.strategy = opt.strategy;
    KroneckerSumOperator current = a;
    while (true) {
        GridLevel level{current, to_tt_matrix(current), std::nullopt, current.row_dims()};
        const bool small_enough = opt.coarsest_max > 0.0 && current.rows() <= opt.coarsest_max;
        auto transfer = small_enough ? std::nullopt : detail::next_transfer(current, opt);
        if (!transfer) {
            h.levels.push_back(std::move(level));
            break;
        }
        KroneckerSumOperator coarse = merge_terms(petrov_galerkin(current, transfer->p, transfer->q));
        level.transfer = std::move(transfer);
        h.levels.push_back(std::move(level));
        current = std::move(coarse);
    }
    const double n = h.coarsest().op.rows();
    if (n * n > opt.dense_limit)
        throw SizeLimitError("build_hierarchy: coarsest level with " + std::to_string(static_cast<long long>(n)) +
                             " states is too large for a dense solve");
    h.coarsest_dense = assemble_dense(h.coarsest().op, opt.dense_limit);
    return h;
}

/// Size of 1ᵀA: the largest entry from a dense assembly when it fits, otherwise
/// the 2-norm of the column-sum tensor (an upper bound on the largest entry).
inline double max_column_sum_defect(const KroneckerSumOperator& op, double dense_limit = kDefaultDenseLimit) {
    if (op.rows() * op.cols() <= dense_limit) {
        Matrix a = assemble_dense(op, dense_limit);
        return a.colwise().sum().cwiseAbs().maxCoeff();
    }
    // 1ᵀ(⊗E_j) = ⊗(1ᵀE_j): accumulate the column-sum tensor in TT form.
    const auto J = static_cast<std::size_t>(op.order());
    TTVector acc;
    for (const auto& t : op.terms()) {
        std::vector<Vector> f;
        for (std::size_t j = 0; j < J; ++j) f.push_back(t.factors[j].colwise().sum().transpose());
        f[0] *= t.coeff;
        auto term = from_elementary(f);
        acc = acc.empty() ? term : add(acc, term);
    }
    return acc.empty() ? 0.0 : norm(acc);
}

}  // namespace ttmg
