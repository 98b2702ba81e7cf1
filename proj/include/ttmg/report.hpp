#pragma once

#include <cstdio>
#include <ostream>
#include <string>

#include <nlohmann/json.hpp>

#include "hierarchy.hpp"
#include "solver.hpp"

namespace ttmg {

inline constexpr int kReportSchemaVersion = 1;

inline nlohmann::json to_json(const CycleRecord& r) {
    return {{"cycle", r.cycle},         {"residual", r.residual},        {"rank_cap", r.rank_cap},
            {"max_rank", r.max_rank},   {"eff_rank", r.eff_rank},        {"elapsed_seconds", r.elapsed_seconds},
            {"rank_increased", r.rank_increased}};
}

inline nlohmann::json to_json(const SolveReport& rep) {
    nlohmann::json cycles = nlohmann::json::array();
    for (const auto& r : rep.records) cycles.push_back(to_json(r));
    return {{"schema_version", kReportSchemaVersion},
            {"termination", to_string(rep.termination)},
            {"states", rep.states},
            {"levels", rep.levels},
            {"cycles", rep.cycles},
            {"final_residual", rep.final_residual},
            {"final_rank_cap", rep.final_rank_cap},
            {"final_max_rank", rep.final_max_rank},
            {"final_eff_rank", rep.final_eff_rank},
            {"elapsed_seconds", rep.elapsed_seconds},
            {"records", cycles}};
}

inline nlohmann::json to_json(const GridHierarchy& h) {
    nlohmann::json levels = nlohmann::json::array();
    for (Index l = 0; l < h.num_levels(); ++l) {
        const auto& lv = h.levels[static_cast<std::size_t>(l)];
        levels.push_back({{"level", l},
                          {"states", lv.op.rows()},
                          {"mode_sizes", lv.dims},
                          {"terms", lv.op.num_terms()},
                          {"operator_tt_ranks", lv.op_tt.ranks()}});
    }
    return {{"strategy", to_string(h.strategy)}, {"num_levels", h.num_levels()}, {"levels", levels}};
}

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace detail

/// Versioned CSV: a schema comment line, the header, one row per record.
inline void write_csv(const SolveReport& rep, std::ostream& os) {
    os << "# schema_version=" << kReportSchemaVersion << '\n';
    os << "cycle,residual,rank_cap,max_rank,eff_rank,elapsed_seconds\n";
    for (const auto& r : rep.records)
        os << r.cycle << ',' << detail::format_double(r.residual) << ',' << r.rank_cap << ',' << r.max_rank << ','
           << detail::format_double(r.eff_rank) << ',' << detail::format_double(r.elapsed_seconds) << '\n';
}

/// One line with the columns of the result tables: n, levels, iter, max rank,
/// effective rank, time.
inline std::string summary_line(const SolveReport& rep) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "n=%.0f levels=%lld iter=%lld max_rank=%lld eff_rank=%.1f time=%.1f status=%s",
                  rep.states, static_cast<long long>(rep.levels), static_cast<long long>(rep.cycles),
                  static_cast<long long>(rep.final_max_rank), rep.final_eff_rank, rep.elapsed_seconds,
                  to_string(rep.termination).c_str());
    return buf;
}

}  // namespace ttmg
