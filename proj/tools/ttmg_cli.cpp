// Command-line front end: solve, validate against enumeration oracles, and
// rank-accuracy studies.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ttmg/config.hpp"
#include "ttmg/report.hpp"

namespace fs = std::filesystem;
using namespace ttmg;

namespace {

enum ExitCode { kOk = 0, kConfigError = 1, kNotConverged = 2, kValidationFailed = 3 };

struct CommonArgs {
    std::string config;
    std::string out;
    std::optional<std::uint64_t> seed;
    std::vector<std::string> overrides;
};

RunConfig load(const CommonArgs& args) {
    auto overrides = args.overrides;
    if (args.seed) overrides.push_back("seed=" + std::to_string(*args.seed));
    if (!args.out.empty()) overrides.push_back("output.dir=" + args.out);
    return load_config(args.config, overrides);
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream os(path);
    require(static_cast<bool>(os), "cannot write " + path.string());
    os << text;
}

struct Prepared {
    KroneckerSumOperator op;
    GridHierarchy hierarchy;
};

Prepared prepare(const RunConfig& cfg) {
    auto op = build_model(cfg.model);
    auto h = build_hierarchy(op, cfg.hierarchy);
    return {std::move(op), std::move(h)};
}

SolveResult run_solver(const RunConfig& cfg, const GridHierarchy& h) {
    return solve_stationary(h, cfg.solver, cfg.output.record_time, [](const CycleRecord& r) {
        std::cerr << "cycle " << r.cycle << " residual " << r.residual << " max_rank " << r.max_rank << " cap "
                  << r.rank_cap << '\n';
    });
}

void write_reports(const RunConfig& cfg, const GridHierarchy& h, const SolveReport& rep) {
    const fs::path dir(cfg.output.dir);
    fs::create_directories(dir);
    if (cfg.output.csv) {
        std::ofstream os(dir / "report.csv");
        write_csv(rep, os);
    }
    if (cfg.output.json) {
        auto j = to_json(rep);
        j["hierarchy"] = to_json(h);
        j["seed"] = cfg.seed;
        write_text(dir / "report.json", j.dump(2) + "\n");
    }
    write_text(dir / "summary.txt", summary_line(rep) + "\n");
}

int cmd_solve(const CommonArgs& args) {
    const auto cfg = load(args);
    const auto prep = prepare(cfg);
    const auto result = run_solver(cfg, prep.hierarchy);
    write_reports(cfg, prep.hierarchy, result.report);
    std::cout << summary_line(result.report) << '\n';
    return result.report.converged() ? kOk : kNotConverged;
}

int cmd_validate(const CommonArgs& args) {
    const auto cfg = load(args);
    if (cfg.model.states() > kOracleStateLimit) {
        std::cerr << "validate: " << cfg.model.states() << " states exceed the oracle limit of " << kOracleStateLimit
                  << '\n';
        return kValidationFailed;
    }
    const auto prep = prepare(cfg);
    const SparseMatrix kron = assemble_sparse(prep.op);
    const SparseMatrix oracle = build_oracle(cfg.model);
    SparseMatrix diff = kron - oracle;
    double gen_dev = 0.0;
    for (Index c = 0; c < diff.outerSize(); ++c)
        for (SparseMatrix::InnerIterator it(diff, c); it; ++it) gen_dev = std::max(gen_dev, std::abs(it.value()));

    const auto result = run_solver(cfg, prep.hierarchy);
    const Vector x_mg = to_full(result.x);
    const Vector x_ref = oracle_stationary(oracle);
    const double sol_dev = (x_mg / x_mg.sum() - x_ref).norm();
    const bool pass = gen_dev <= 1e-12 && sol_dev <= 1e-5;

    nlohmann::json j = {{"states", cfg.model.states()},
                        {"generator_max_deviation", gen_dev},
                        {"solution_deviation", sol_dev},
                        {"irreducible", is_irreducible(oracle)},
                        {"solve", to_json(result.report)},
                        {"pass", pass}};
    const fs::path dir(cfg.output.dir);
    fs::create_directories(dir);
    write_text(dir / "validate.json", j.dump(2) + "\n");
    std::cout << "generator_max_deviation=" << gen_dev << " solution_deviation=" << sol_dev
              << (pass ? " PASS" : " FAIL") << '\n';
    return pass ? kOk : kValidationFailed;
}

int cmd_rank_study(const CommonArgs& args) {
    const auto cfg = load(args);
    const auto op = build_model(cfg.model);
    const TTMatrix a = to_tt_matrix(op);
    TTVector ref;
    if (cfg.model.states() <= kOracleStateLimit) {
        ref = from_full(oracle_stationary(assemble_sparse(op)), op.row_dims());
    } else {
        const auto h = build_hierarchy(op, cfg.hierarchy);
        auto result = run_solver(cfg, h);
        if (!result.report.converged()) {
            std::cerr << "rank-study: reference solve did not converge\n";
            return kNotConverged;
        }
        ref = std::move(result.x);
    }
    const fs::path dir(cfg.output.dir);
    fs::create_directories(dir);
    std::ofstream os(dir / "rank_study.csv");
    os << "# schema_version=" << kReportSchemaVersion << '\n';
    os << "rank,error,residual\n";
    bool monotone = true;
    double prev = std::numeric_limits<double>::infinity();
    for (const auto& p : rank_accuracy(ref, a, cfg.rank_study.max_rank)) {
        const double metric = cfg.rank_study.metric == RankMetric::error ? p.error : p.residual;
        monotone = monotone && metric <= prev * (1.0 + 1e-9) + 1e-15;
        prev = metric;
        os << p.rank << ',' << detail::format_double(p.error) << ',' << detail::format_double(p.residual) << '\n';
    }
    std::cout << "rank-study: ranks 1.." << cfg.rank_study.max_rank << (monotone ? " monotone" : " NOT monotone")
              << '\n';
    return kOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multigrid solver for stationary distributions of Kronecker-structured Markov chains"};
    app.require_subcommand(1);
    CommonArgs args;
    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", args.config, "INI configuration file")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", args.out, "Output directory (overrides output.dir)");
        sub->add_option("--seed", args.seed, "Random seed (overrides seed)");
        sub->add_option("--override", args.overrides, "section.key=value, repeatable")->take_all();
    };
    auto* solve = app.add_subcommand("solve", "Build the model and hierarchy, run the solver, write reports");
    auto* validate = app.add_subcommand("validate", "Cross-check generator and solution against enumeration oracles");
    auto* rank = app.add_subcommand("rank-study", "Accuracy of rank-R truncations of the reference solution");
    for (auto* s : {solve, validate, rank}) add_common(s);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigError;
    }
    try {
        if (*solve) return cmd_solve(args);
        if (*validate) return cmd_validate(args);
        return cmd_rank_study(args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const SizeLimitError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
}
