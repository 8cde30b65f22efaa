#pragma once

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "wursim/experiment.hpp"
#include "wursim/params.hpp"
#include "wursim/simcore.hpp"
#include "wursim/validation.hpp"

namespace wursim::cli {

// exit codes: 0 success, 1 validation failure, 2 bad input, 3 I/O failure
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidationFailed = 1;
inline constexpr int kExitBadInput = 2;
inline constexpr int kExitIo = 3;

namespace detail {

struct Options {
    std::vector<std::size_t> n_values = {100, 1000};
    std::vector<double> loads = default_loads();
    std::vector<std::string> protocols = {"wur-ls", "wur-bs", "tdma", "aloha"};
    std::size_t reps = 10;
    std::uint64_t events = 100000;
    std::uint64_t seed = 1;
    double p_thr = 0.05;
    std::size_t backoff_window = 16;
    std::vector<std::size_t> sizes;
    std::vector<std::size_t> bounds_g = {100, 1000};
    std::size_t rounds = 12;
    double xi = 0.1;
    std::uint64_t trials = 100000;
    std::vector<std::string> checks;
    std::size_t check_g = 10;
    std::string out_dir = "out";
    std::string config_path;
    bool verbose = false;
};

inline void apply_config_file(CLI::App& app, Options& o) {
    if (o.config_path.empty()) return;
    std::ifstream f(o.config_path);
    if (!f) throw experiment::IoError("cannot read config file: " + o.config_path);
    nlohmann::json cfg;
    try {
        cfg = nlohmann::json::parse(f);
    } catch (const nlohmann::json::exception& e) {
        throw std::domain_error(std::string("config parse error: ") + e.what());
    }
    if (!cfg.is_object()) throw std::domain_error("config must be a JSON object");

    auto unseen = [&app](const std::string& flag) {
        const auto* opt = app.get_option_no_throw("--" + flag);
        return opt == nullptr || opt->count() == 0;
    };

    for (const auto& [key, value] : cfg.items()) {
        try {
            if (key == "n" && unseen("n"))
                o.n_values = value.get<std::vector<std::size_t>>();
            else if (key == "loads" && unseen("loads"))
                o.loads = value.get<std::vector<double>>();
            else if (key == "protocols" && unseen("protocols"))
                o.protocols = value.get<std::vector<std::string>>();
            else if (key == "reps" && unseen("reps"))
                o.reps = value.get<std::size_t>();
            else if (key == "events" && unseen("events"))
                o.events = value.get<std::uint64_t>();
            else if (key == "seed" && unseen("seed"))
                o.seed = value.get<std::uint64_t>();
            else if (key == "p_thr" && unseen("p-thr"))
                o.p_thr = value.get<double>();
            else if (key == "backoff_window" && unseen("backoff-window"))
                o.backoff_window = value.get<std::size_t>();
            else if (key == "sizes" && unseen("sizes"))
                o.sizes = value.get<std::vector<std::size_t>>();
            else if (key == "g" && unseen("g"))
                o.bounds_g = value.get<std::vector<std::size_t>>();
            else if (key == "rounds" && unseen("rounds"))
                o.rounds = value.get<std::size_t>();
            else if (key == "xi" && unseen("xi"))
                o.xi = value.get<double>();
            else if (key == "trials" && unseen("trials"))
                o.trials = value.get<std::uint64_t>();
            else if (key == "checks" && unseen("checks"))
                o.checks = value.get<std::vector<std::string>>();
            else if (key == "out" && unseen("out"))
                o.out_dir = value.get<std::string>();
            else if (key == "n" || key == "loads" || key == "protocols" || key == "reps" ||
                     key == "events" || key == "seed" || key == "p_thr" ||
                     key == "backoff_window" || key == "sizes" || key == "g" || key == "rounds" ||
                     key == "xi" || key == "trials" || key == "checks" || key == "out") {
                // flag took precedence
            } else {
                throw std::domain_error("config: unknown key '" + key + "'");
            }
        } catch (const nlohmann::json::exception& e) {
            throw std::domain_error("config: bad value for '" + key + "': " + e.what());
        }
    }
}

inline std::vector<sim::ProtocolConfig> parse_protocols(const Options& o) {
    std::vector<sim::ProtocolConfig> out;
    for (const auto& name : o.protocols) {
        auto kind = sim::protocol_from_name(name);
        if (!kind) throw std::domain_error("unknown protocol: " + name);
        sim::ProtocolConfig p;
        p.kind = *kind;
        p.p_thr = o.p_thr;
        p.backoff_window = o.backoff_window;
        out.push_back(p);
    }
    return out;
}

inline void write_meta(const Options& o, const std::string& command) {
    nlohmann::ordered_json meta;
    const auto now = std::chrono::system_clock::now();
    meta["command"] = command;
    meta["timestamp_unix"] =
        std::chrono::duration_cast<std::chrono::seconds>(now.time_since_epoch()).count();
    meta["seed"] = o.seed;
    meta["events"] = o.events;
    meta["replications"] = o.reps;
    experiment::write_text_file(std::filesystem::path(o.out_dir) / "run_meta.json",
                                meta.dump(1) + "\n");
}

inline std::string fmt_cell(const std::optional<double>& v) {
    if (!v) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", *v);
    return buf;
}

inline void print_summary(const std::vector<experiment::ResultRow>& rows, std::ostream& os) {
    os << "  n      xi  protocol  gsize   delay[s]      eta[%]   unstable  rounds\n";
    for (const auto& r : rows) {
        char line[160];
        std::snprintf(line, sizeof line, "%5zu  %5.3g  %-8s  %5s  %10s  %10s  %8.2f  %6s\n", r.n,
                      r.xi, sim::protocol_name(r.protocol),
                      r.group_size ? std::to_string(*r.group_size).c_str() : "-",
                      fmt_cell(r.mean_delay_s).c_str(), fmt_cell(r.mean_eta_pct).c_str(),
                      r.unstable_fraction, fmt_cell(r.mean_rounds).c_str());
        os << line;
    }
}

inline int cmd_sweep(const Options& o, std::ostream& os) {
    experiment::SweepSpec spec;
    spec.n_values = o.n_values;
    spec.loads = o.loads;
    spec.protocols = parse_protocols(o);
    spec.replications = o.reps;
    spec.slot_budget = o.events;
    spec.base_seed = o.seed;
    spec.validate();

    NetworkParams params = default_params(o.n_values.front());
    auto rows = experiment::run_sweep(spec, params);
    const auto dir = std::filesystem::path(o.out_dir);
    experiment::write_rows(dir / "sweep.csv", dir / "sweep.json", rows);
    write_meta(o, "sweep");
    os << "wrote " << (dir / "sweep.csv").string() << " (" << rows.size() << " rows)\n";
    print_summary(rows, os);
    return kExitOk;
}

inline int cmd_validate(const Options& o, std::ostream& os) {
    validation::CheckOptions copts;
    copts.n = o.n_values.front();
    copts.xi = o.xi;
    copts.group_size = o.check_g;
    copts.events = o.events;
    copts.mc_trials = o.trials;
    copts.seed = o.seed;
    copts.p_thr = o.p_thr;

    const auto names = o.checks.empty() ? validation::all_check_names() : o.checks;
    const auto results = validation::run_checks(names, copts);
    bool all_ok = true;
    for (const auto& r : results) {
        os << (r.passed ? "PASS" : "FAIL") << "  " << r.name << ": " << r.detail << "\n";
        all_ok = all_ok && r.passed;
    }
    os << (all_ok ? "all checks passed\n" : "some checks FAILED\n");
    return all_ok ? kExitOk : kExitValidationFailed;
}

inline int cmd_bounds(const Options& o, std::ostream& os) {
    for (std::size_t g : o.bounds_g)
        if (g < 2) throw std::domain_error("bounds: group size must be >= 2, no collision possible");

    const auto dir = std::filesystem::path(o.out_dir);
    for (std::size_t g : o.bounds_g) {
        NetworkParams params = default_params(g);
        auto rep = experiment::bounds_report(g, o.rounds, o.xi, params, o.p_thr, o.events, o.trials,
                                             o.seed);
        const auto csv_path = dir / ("bounds_g" + std::to_string(g) + ".csv");
        experiment::write_text_file(csv_path, experiment::bounds_to_csv(rep));
        os << "G=" << g << "  measured backlog " << rep.measured_backlog << "  mean stock "
           << rep.mean_group_stock << "  E[m|collision] " << rep.conditional_mean_m << "\n";
        os << "  round  mc_cdf  pessimistic  optimistic\n";
        for (const auto& row : rep.rows) {
            char line[120];
            std::snprintf(line, sizeof line, "  %5d  %6.4f  %11.4f  %10.4f\n", row.round, row.mc_cdf,
                          row.bound_pessimistic, row.bound_optimistic);
            os << line;
        }
        os << "wrote " << csv_path.string() << "\n";
    }
    write_meta(o, "bounds");
    return kExitOk;
}

inline int cmd_fixed_group(const Options& o, std::ostream& os) {
    if (o.n_values.size() != 1)
        throw std::domain_error("fixed-group: exactly one --n value expected");
    const std::size_t n = o.n_values.front();
    const auto sizes = o.sizes.empty() ? std::vector<std::size_t>{1, n} : o.sizes;
    for (std::size_t s : sizes)
        if (s < 1 || s > n) throw std::domain_error("fixed-group: size outside [1, N]");

    experiment::SweepSpec spec;
    spec.n_values = {n};
    spec.loads = o.loads;
    spec.replications = o.reps;
    spec.slot_budget = o.events;
    spec.base_seed = o.seed;
    spec.fixed_group_sizes = sizes;

    sim::ProtocolConfig ls;
    ls.kind = sim::Protocol::WUR_LS;
    ls.p_thr = o.p_thr;
    sim::ProtocolConfig bs;
    bs.kind = sim::Protocol::WUR_BS;
    bs.p_thr = o.p_thr;

    NetworkParams params = default_params(n);
    spec.protocols = {ls};
    auto ls_rows = experiment::run_sweep(spec, params);
    spec.protocols = {bs};
    auto bs_rows = experiment::run_sweep(spec, params);
    auto deltas = experiment::delta_table(ls_rows, bs_rows);

    const auto dir = std::filesystem::path(o.out_dir);
    std::vector<experiment::ResultRow> all_rows = ls_rows;
    all_rows.insert(all_rows.end(), bs_rows.begin(), bs_rows.end());
    experiment::write_rows(dir / "fixed_group_rows.csv", dir / "fixed_group_rows.json", all_rows);
    experiment::write_text_file(dir / "fixed_group_delta.csv", experiment::deltas_to_csv(deltas));
    write_meta(o, "fixed-group");

    os << "  n      xi  gsize   dDelay[s]   dEta[%]\n";
    for (const auto& d : deltas) {
        char line[120];
        std::snprintf(line, sizeof line, "%5zu  %5.3g  %5s  %10s  %9s\n", d.n, d.xi,
                      d.group_size ? std::to_string(*d.group_size).c_str() : "-",
                      fmt_cell(d.delta_delay_s).c_str(), fmt_cell(d.delta_eta_pct).c_str());
        os << line;
    }
    os << "wrote " << (dir / "fixed_group_delta.csv").string() << " (" << deltas.size()
       << " rows)\n";
    return kExitOk;
}

}  // namespace detail

/// Entry point shared by the binary and the tests. argv[0] is not
/// expected in `args`.
inline int run(const std::vector<std::string>& args, std::ostream& os = std::cout) {
    detail::Options o;
    if (const char* env_seed = std::getenv("WURSIM_SEED")) {
        char* end = nullptr;
        const auto v = std::strtoull(env_seed, &end, 10);
        if (end && *end == '\0') o.seed = v;
    }

    CLI::App app{"wake-up radio multicast polling simulator"};
    app.require_subcommand(1);

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--n", o.n_values, "network sizes")->delimiter(',');
        cmd->add_option("--loads", o.loads, "aggregate loads in (0,1)")->delimiter(',');
        cmd->add_option("--reps", o.reps, "replications per cell");
        cmd->add_option("--events", o.events, "polling/slot events per run");
        cmd->add_option("--seed", o.seed, "base seed (WURSIM_SEED fallback)");
        cmd->add_option("--p-thr", o.p_thr, "collision probability threshold");
        cmd->add_option("--backoff-window", o.backoff_window, "aloha backoff window, slots");
        cmd->add_option("--out", o.out_dir, "output directory");
        cmd->add_option("--config", o.config_path, "JSON config file");
    };

    auto* sweep = app.add_subcommand("sweep", "delay/efficiency sweep over the load grid");
    add_common(sweep);
    sweep->add_option("--protocols", o.protocols, "protocol list")->delimiter(',');

    auto* validate = app.add_subcommand("validate", "analytic-vs-simulation consistency checks");
    add_common(validate);
    validate->add_option("--checks", o.checks, "subset of checks to run")->delimiter(',');
    validate->add_option("--xi", o.xi, "load for simulation checks");
    validate->add_option("--g", o.check_g, "group size for enumeration checks");
    validate->add_option("--trials", o.trials, "Monte Carlo trials");

    auto* bounds = app.add_subcommand("bounds", "collision-resolution round report");
    add_common(bounds);
    bounds->add_option("--g", o.bounds_g, "group sizes")->delimiter(',');
    bounds->add_option("--rounds", o.rounds, "round columns to emit");
    bounds->add_option("--xi", o.xi, "load for the measurement run");
    bounds->add_option("--trials", o.trials, "Monte Carlo trials");

    auto* fixed = app.add_subcommand("fixed-group", "linear vs binary search at fixed group sizes");
    add_common(fixed);
    fixed->add_option("--sizes", o.sizes, "fixed group sizes")->delimiter(',');

    try {
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        os << app.help() << "\n";
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        os << "error: " << e.what() << "\n";
        return kExitBadInput;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        detail::apply_config_file(*active, o);

        if (active == sweep) return detail::cmd_sweep(o, os);
        if (active == validate) return detail::cmd_validate(o, os);
        if (active == bounds) return detail::cmd_bounds(o, os);
        if (active == fixed) return detail::cmd_fixed_group(o, os);
        return kExitBadInput;
    } catch (const experiment::IoError& e) {
        os << "i/o error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::domain_error& e) {
        os << "error: " << e.what() << "\n";
        return kExitBadInput;
    } catch (const std::exception& e) {
        os << "error: " << e.what() << "\n";
        return kExitBadInput;
    }
}

}  // namespace wursim::cli
