#pragma once

#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "common.hpp"
#include "hierarchy.hpp"
#include "models.hpp"
#include "solver.hpp"

namespace ttmg {

enum class ModelFamily { overflow, kanban };
enum class RankMetric { error, residual };

struct ModelConfig {
    ModelFamily family = ModelFamily::overflow;
    Index J = 3;
    std::vector<Index> k;  // one entry per queue (overflow); Kanban uses k[0]
    std::vector<double> lambda, mu, omega;
    bool coupled = true;

    OverflowParams overflow() const { return {k, lambda, mu, coupled}; }
    KanbanParams kanban() const { return {J, k.front(), mu, omega}; }

    double states() const {
        if (family == ModelFamily::kanban) return kanban_global_size(J, k.front());
        double n = 1.0;
        for (auto c : k) n *= static_cast<double>(c + 1);
        return n;
    }
};

struct OutputConfig {
    std::string dir = "out";
    bool csv = true;
    bool json = true;
    bool record_time = true;  // false writes zero timings, making reports byte-identical
};

struct RankStudyConfig {
    Index max_rank = 10;
    RankMetric metric = RankMetric::error;
};

struct RunConfig {
    ModelConfig model;
    HierarchyOptions hierarchy;
    SolverConfig solver;
    OutputConfig output;
    RankStudyConfig rank_study;
    std::uint64_t seed = 0;
};

namespace detail {

using boost::property_tree::ptree;

inline std::string lower(std::string s) {
    boost::algorithm::to_lower(s);
    boost::algorithm::trim(s);
    return s;
}

template <typename T>
T parse_scalar(const std::string& key, const std::string& text) {
    std::istringstream is(text);
    T value{};
    is >> value;
    require(!is.fail(), "config: cannot parse value '" + text + "' for " + key);
    std::string rest;
    is >> rest;
    require(rest.empty(), "config: trailing characters in value '" + text + "' for " + key);
    return value;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
    const auto t = lower(text);
    if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
    if (t == "false" || t == "0" || t == "no" || t == "off") return false;
    throw Error("config: expected a boolean for " + key + ", got '" + text + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& text) {
    std::vector<std::string> parts;
    boost::algorithm::split(parts, text, boost::algorithm::is_any_of(", \t"), boost::algorithm::token_compress_on);
    std::vector<T> out;
    for (const auto& p : parts)
        if (!p.empty()) out.push_back(parse_scalar<T>(key, p));
    require(!out.empty(), "config: empty list for " + key);
    return out;
}

/// A scalar repeated to length n, or a list of exactly n values.
template <typename T>
std::vector<T> broadcast(const std::string& key, const std::string& text, Index n) {
    auto v = parse_list<T>(key, text);
    if (v.size() == 1) return std::vector<T>(static_cast<std::size_t>(n), v[0]);
    require(static_cast<Index>(v.size()) == n,
            "config: " + key + " needs 1 or " + std::to_string(n) + " values, got " + std::to_string(v.size()));
    return v;
}

template <typename Enum>
Enum parse_enum(const std::string& key, const std::string& text,
                const std::vector<std::pair<std::string, Enum>>& names) {
    const auto t = lower(text);
    for (const auto& [name, value] : names)
        if (t == name) return value;
    std::string allowed;
    for (const auto& [name, value] : names) allowed += (allowed.empty() ? "" : "|") + name;
    throw Error("config: " + key + " must be one of " + allowed + ", got '" + text + "'");
}

/// Reads a key once and remembers it, so leftovers can be reported as unknown.
class KeyReader {
public:
    explicit KeyReader(const ptree& root) : root_(root) {}

    bool has(const std::string& path) const { return static_cast<bool>(root_.get_optional<std::string>(path)); }

    std::string get(const std::string& path) {
        used_.insert(path);
        return root_.get<std::string>(path);
    }

    void check_unknown() const {
        for (const auto& [section, node] : root_) {
            if (node.empty()) {
                if (node.data().empty()) continue;  // empty section
                require(used_.count(section) > 0, "config: unknown key '" + section + "'");
                continue;
            }
            for (const auto& [key, value] : node) {
                const auto path = section + "." + key;
                require(used_.count(path) > 0, "config: unknown key '" + path + "'");
            }
        }
    }

private:
    const ptree& root_;
    std::set<std::string> used_;
};

}  // namespace detail

/// "section.key=value" (or "key=value" for top-level keys) applied before parsing.
inline void apply_override(boost::property_tree::ptree& tree, const std::string& assignment) {
    const auto eq = assignment.find('=');
    require(eq != std::string::npos && eq > 0, "override must look like section.key=value: '" + assignment + "'");
    auto key = assignment.substr(0, eq);
    auto value = assignment.substr(eq + 1);
    boost::algorithm::trim(key);
    boost::algorithm::trim(value);
    tree.put(key, value);
}

inline RunConfig parse_config(const boost::property_tree::ptree& tree) {
    using namespace detail;
    KeyReader r(tree);
    RunConfig c;
    auto opt = [&](const std::string& path, auto&& apply) {
        if (r.has(path)) apply(r.get(path));
    };

    if (r.has("seed")) c.seed = parse_scalar<std::uint64_t>("seed", r.get("seed"));

    auto& m = c.model;
    require(r.has("model.family"), "config: model.family is required");
    m.family = parse_enum<ModelFamily>("model.family", r.get("model.family"),
                                       {{"overflow", ModelFamily::overflow}, {"kanban", ModelFamily::kanban}});
    require(r.has("model.J") && r.has("model.k"), "config: model.J and model.k are required");
    m.J = parse_scalar<Index>("model.J", r.get("model.J"));
    require(m.J >= 1, "config: model.J must be positive");
    m.k = broadcast<Index>("model.k", r.get("model.k"), m.J);
    require(r.has("model.mu"), "config: model.mu is required");
    if (m.family == ModelFamily::overflow) {
        require(r.has("model.lambda"), "config: model.lambda is required for overflow models");
        m.lambda = broadcast<double>("model.lambda", r.get("model.lambda"), m.J);
        m.mu = broadcast<double>("model.mu", r.get("model.mu"), m.J);
        opt("model.coupling", [&](const std::string& v) {
            m.coupled = parse_enum<bool>("model.coupling", v, {{"overflow", true}, {"none", false}});
        });
        m.overflow().validate();
    } else {
        require(m.J >= 2, "config: Kanban models need J >= 2");
        for (auto k : m.k) require(k == m.k.front(), "config: Kanban models use one ticket count for all machines");
        require(r.has("model.omega"), "config: model.omega is required for Kanban models");
        m.mu = broadcast<double>("model.mu", r.get("model.mu"), m.J);
        m.omega = broadcast<double>("model.omega", r.get("model.omega"), m.J - 1);
        m.kanban().validate();
    }

    auto& h = c.hierarchy;
    h.strategy = m.family == ModelFamily::overflow ? CoarseningStrategy::overflow : CoarseningStrategy::kanban;
    opt("hierarchy.interpolation", [&](const std::string& v) {
        h.interpolation = parse_enum<InterpolationKind>(
            "hierarchy.interpolation", v, {{"linear", InterpolationKind::linear}, {"direct", InterpolationKind::direct}});
    });
    opt("hierarchy.coarsest_max", [&](const std::string& v) { h.coarsest_max = parse_scalar<double>("hierarchy.coarsest_max", v); });
    opt("hierarchy.dense_limit", [&](const std::string& v) { h.dense_limit = parse_scalar<double>("hierarchy.dense_limit", v); });

    auto& s = c.solver;
    auto idx = [&](const std::string& key, Index& target) {
        opt("solver." + key, [&](const std::string& v) { target = parse_scalar<Index>("solver." + key, v); });
    };
    auto dbl = [&](const std::string& key, double& target) {
        opt("solver." + key, [&](const std::string& v) { target = parse_scalar<double>("solver." + key, v); });
    };
    idx("nu1", s.nu1);
    idx("nu2", s.nu2);
    opt("solver.smoother", [&](const std::string& v) {
        s.smoother = parse_enum<SmootherKind>("solver.smoother", v,
                                              {{"gmres", SmootherKind::gmres},
                                               {"gauss_seidel", SmootherKind::gauss_seidel},
                                               {"richardson", SmootherKind::richardson}});
    });
    opt("solver.sweep", [&](const std::string& v) {
        s.sweep = parse_enum<SweepDirection>("solver.sweep", v,
                                             {{"forward", SweepDirection::forward},
                                              {"backward", SweepDirection::backward},
                                              {"symmetric", SweepDirection::symmetric}});
    });
    opt("solver.split_order", [&](const std::string& v) {
        s.split_order = parse_enum<SplitOrder>("solver.split_order", v,
                                               {{"first_mode_major", SplitOrder::first_mode_major},
                                                {"last_mode_major", SplitOrder::last_mode_major}});
    });
    dbl("richardson_weight", s.richardson_weight);
    idx("initial_max_rank", s.initial_max_rank);
    dbl("rank_growth", s.rank_growth);
    idx("rank_limit", s.rank_limit);
    dbl("theta", s.theta);
    dbl("tolerance", s.tolerance);
    idx("max_cycles", s.max_cycles);
    idx("stagnation_window", s.stagnation_window);
    dbl("truncation_factor", s.truncation_factor);
    dbl("max_truncation_eps", s.max_truncation_eps);
    dbl("min_truncation_eps", s.min_truncation_eps);
    dbl("fixed_truncation_eps", s.fixed_truncation_eps);
    dbl("coarse_eps", s.coarse_eps);
    dbl("inner_tolerance", s.inner.tolerance);
    idx("inner_max_iterations", s.inner.max_iterations);
    idx("inner_restart", s.inner.restart);
    opt("solver.inner_scaling", [&](const std::string& v) {
        s.inner.jacobi_scaling =
            parse_enum<bool>("solver.inner_scaling", v, {{"jacobi", true}, {"none", false}});
    });
    opt("solver.initial_guess", [&](const std::string& v) {
        s.initial_guess = parse_enum<InitialGuess>(
            "solver.initial_guess", v,
            {{"bootstrap", InitialGuess::bootstrap}, {"ones", InitialGuess::ones}, {"random", InitialGuess::random}});
    });
    opt("solver.final_compression",
        [&](const std::string& v) { s.final_compression = parse_bool("solver.final_compression", v); });
    s.seed = c.seed;
    s.validate();

    auto& o = c.output;
    opt("output.dir", [&](const std::string& v) { o.dir = v; });
    opt("output.formats", [&](const std::string& v) {
        auto list = parse_list<std::string>("output.formats", v);
        o.csv = o.json = false;
        for (auto& f : list) {
            const auto t = lower(f);
            if (t == "csv")
                o.csv = true;
            else if (t == "json")
                o.json = true;
            else
                throw Error("config: output.formats accepts csv and json, got '" + f + "'");
        }
    });
    opt("output.record_time", [&](const std::string& v) { o.record_time = parse_bool("output.record_time", v); });

    auto& rs = c.rank_study;
    opt("rank_study.max_rank", [&](const std::string& v) {
        rs.max_rank = parse_scalar<Index>("rank_study.max_rank", v);
        require(rs.max_rank >= 1, "config: rank_study.max_rank must be positive");
    });
    opt("rank_study.metric", [&](const std::string& v) {
        rs.metric = parse_enum<RankMetric>("rank_study.metric", v,
                                           {{"error", RankMetric::error}, {"residual", RankMetric::residual}});
    });

    r.check_unknown();
    return c;
}

inline RunConfig parse_config(std::istream& is, const std::vector<std::string>& overrides = {}) {
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(is, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw Error(std::string("config: ") + e.what());
    }
    for (const auto& o : overrides) apply_override(tree, o);
    return parse_config(tree);
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides = {}) {
    std::ifstream in(path);
    require(static_cast<bool>(in), "config: cannot open " + path);
    return parse_config(in, overrides);
}

inline KroneckerSumOperator build_model(const ModelConfig& m) {
    return m.family == ModelFamily::overflow ? build_overflow(m.overflow()) : build_kanban(m.kanban());
}

inline SparseMatrix build_oracle(const ModelConfig& m) {
    return m.family == ModelFamily::overflow ? oracle_generator(m.overflow()) : oracle_generator(m.kanban());
}

}  // namespace ttmg
