#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "wursim/analytic.hpp"
#include "wursim/params.hpp"
#include "wursim/rng.hpp"
#include "wursim/simcore.hpp"

namespace wursim::experiment {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Heterogeneous per-node rates: i.i.d. exponential weights normalized so
/// that sum(lambda_n * t_p) hits the requested aggregate load exactly.
inline NodeRates allocate_rates(std::size_t n, double xi, double t_p, std::uint64_t seed) {
    if (n < 1) throw std::domain_error("allocate_rates: need at least one node");
    if (!(xi > 0.0)) throw std::domain_error("allocate_rates: xi must be positive");
    Rng rng(seed);
    NodeRates rates;
    rates.lambdas.resize(n);
    double sum = 0.0;
    for (auto& l : rates.lambdas) {
        l = rng.exponential(1.0);
        sum += l;
    }
    const double target = xi / t_p;
    for (auto& l : rates.lambdas) l *= target / sum;
    // one renormalization pass squeezes out the accumulated rounding
    double realized = 0.0;
    for (double l : rates.lambdas) realized += l;
    const double fix = target / realized;
    for (auto& l : rates.lambdas) l *= fix;
    rates.aggregate_load = 0.0;
    for (double l : rates.lambdas) rates.aggregate_load += l * t_p;
    return rates;
}

/// Experiment grid: every combination of (n, load, protocol[, group size])
/// is one cell, run `replications` times.
struct SweepSpec {
    std::vector<std::size_t> n_values = {100, 1000};
    std::vector<double> loads = default_loads();
    std::vector<sim::ProtocolConfig> protocols;
    std::size_t replications = 10;
    std::uint64_t slot_budget = 100000;
    std::uint64_t base_seed = 1;
    std::vector<std::size_t> fixed_group_sizes;  ///< non-empty switches on fixed-group mode
    bool redraw_rates_each_replication = true;

    void validate() const {
        if (replications < 1) throw std::domain_error("SweepSpec: replications must be >= 1");
        if (n_values.empty()) throw std::domain_error("SweepSpec: no network sizes");
        if (protocols.empty()) throw std::domain_error("SweepSpec: no protocols");
        if (loads.empty()) throw std::domain_error("SweepSpec: no loads");
        for (double xi : loads)
            if (!(xi > 0.0) || !(xi < 1.0)) throw std::domain_error("SweepSpec: loads must lie in (0,1)");
        if (slot_budget == 0) throw std::domain_error("SweepSpec: slot budget must be positive");
        for (std::size_t n : n_values)
            for (std::size_t s : fixed_group_sizes)
                if (s < 1 || s > n) throw std::domain_error("SweepSpec: fixed group size outside [1, N]");
    }
};

struct ResultRow {
    std::size_t n = 0;
    double xi = 0.0;
    sim::Protocol protocol = sim::Protocol::TDMA;
    std::optional<std::size_t> group_size;
    std::optional<double> mean_delay_s;
    double delay_stderr = 0.0;
    std::optional<double> mean_eta_pct;
    double eta_stderr = 0.0;
    double unstable_fraction = 0.0;
    double collision_rate = 0.0;
    std::optional<double> mean_rounds;
    std::size_t replications = 0;
};

namespace detail {

inline int protocol_rank(sim::Protocol p) {
    switch (p) {
        case sim::Protocol::WUR_LS: return 0;
        case sim::Protocol::WUR_BS: return 1;
        case sim::Protocol::TDMA: return 2;
        case sim::Protocol::ALOHA: return 3;
    }
    return 4;
}

struct MeanStderr {
    double mean = 0.0;
    double stderr_ = 0.0;
    std::size_t count = 0;
};

inline MeanStderr mean_stderr(const std::vector<double>& xs) {
    MeanStderr r;
    r.count = xs.size();
    if (xs.empty()) return r;
    double s = 0.0;
    for (double x : xs) s += x;
    r.mean = s / static_cast<double>(xs.size());
    if (xs.size() < 2) return r;
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.stderr_ = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    return r;
}

}  // namespace detail

/// Seed for one (cell, replication) pair; stable under any execution
/// order. The protocol is deliberately left out: every protocol arm of a
/// cell sees the same arrival randomness, which pairs the comparisons in
/// the linear-vs-binary delta study.
inline std::uint64_t replication_seed(const SweepSpec& spec, std::size_t n, double xi,
                                      std::optional<std::size_t> group_size, std::size_t rep) {
    return mix_seed(spec.base_seed, static_cast<std::uint64_t>(n), std::bit_cast<std::uint64_t>(xi),
                    group_size ? static_cast<std::uint64_t>(*group_size) + 1 : 0ULL,
                    static_cast<std::uint64_t>(rep));
}

/// One cell of the sweep, aggregated over its replications.
inline ResultRow run_cell(const SweepSpec& spec, const NetworkParams& base_params, std::size_t n,
                          double xi, sim::ProtocolConfig proto, std::optional<std::size_t> group_size) {
    NetworkParams params = base_params;
    params.n_nodes = n;
    if (group_size) proto.fixed_group_size = group_size;

    struct RepResult {
        double delay = std::numeric_limits<double>::quiet_NaN();
        double eta = std::numeric_limits<double>::quiet_NaN();
        double collision_rate = 0.0;
        double rounds = 0.0;
        bool unstable = false;
    };

    auto run_one = [&](std::size_t rep) {
        const std::uint64_t cell_seed = replication_seed(spec, n, xi, group_size, rep);
        const std::uint64_t rates_seed =
            spec.redraw_rates_each_replication
                ? mix_seed(cell_seed, 0xA77ECA7E5ULL)
                : mix_seed(replication_seed(spec, n, xi, group_size, 0), 0xA77ECA7E5ULL);
        const auto rates = allocate_rates(n, xi, params.t_p, rates_seed);
        sim::Horizon horizon;
        horizon.max_events = spec.slot_budget;
        auto out = sim::simulate(params, rates, proto, horizon, mix_seed(cell_seed, 0x51D5ULL));

        RepResult r;
        r.unstable = out.unstable;
        if (!out.delays.empty()) r.delay = out.packet_mean_delay();
        if (auto eta = sim::network_energy_efficiency(out)) r.eta = *eta;
        r.collision_rate = out.collision_rate();
        r.rounds = out.mean_rounds_to_resolve();
        return r;
    };

    std::vector<RepResult> reps(spec.replications);
    const unsigned workers = std::max(1u, std::thread::hardware_concurrency());
    if (workers > 1 && spec.replications > 1) {
        std::vector<std::future<RepResult>> futures;
        futures.reserve(spec.replications);
        for (std::size_t rep = 0; rep < spec.replications; ++rep)
            futures.push_back(std::async(std::launch::async | std::launch::deferred, run_one, rep));
        for (std::size_t rep = 0; rep < spec.replications; ++rep) reps[rep] = futures[rep].get();
    } else {
        for (std::size_t rep = 0; rep < spec.replications; ++rep) reps[rep] = run_one(rep);
    }

    ResultRow row;
    row.n = n;
    row.xi = xi;
    row.protocol = proto.kind;
    row.group_size = group_size;
    row.replications = spec.replications;

    std::vector<double> delays;
    std::vector<double> etas;
    std::vector<double> colls;
    std::vector<double> rounds;
    std::size_t unstable = 0;
    for (const auto& r : reps) {
        if (r.unstable) {
            ++unstable;
            continue;
        }
        if (std::isfinite(r.delay)) delays.push_back(r.delay);
        if (std::isfinite(r.eta)) etas.push_back(r.eta);
        colls.push_back(r.collision_rate);
        rounds.push_back(r.rounds);
    }
    row.unstable_fraction =
        static_cast<double>(unstable) / static_cast<double>(spec.replications);
    if (!delays.empty()) {
        auto d = detail::mean_stderr(delays);
        row.mean_delay_s = d.mean;
        row.delay_stderr = d.stderr_;
    }
    if (!etas.empty()) {
        auto e = detail::mean_stderr(etas);
        row.mean_eta_pct = e.mean;
        row.eta_stderr = e.stderr_;
    }
    if (!colls.empty()) row.collision_rate = detail::mean_stderr(colls).mean;
    if (proto.kind == sim::Protocol::WUR_LS || proto.kind == sim::Protocol::WUR_BS)
        if (!rounds.empty()) row.mean_rounds = detail::mean_stderr(rounds).mean;
    return row;
}

/// Runs the whole grid. Rows come back sorted by (n, xi, protocol,
/// group_size) regardless of execution order; identical base seeds
/// reproduce identical rows.
inline std::vector<ResultRow> run_sweep(const SweepSpec& spec, const NetworkParams& base_params) {
    spec.validate();
    base_params.validate();

    struct Cell {
        std::size_t n;
        double xi;
        sim::ProtocolConfig proto;
        std::optional<std::size_t> group_size;
    };
    std::vector<Cell> cells;
    for (std::size_t n : spec.n_values)
        for (double xi : spec.loads)
            for (const auto& proto : spec.protocols) {
                if (spec.fixed_group_sizes.empty()) {
                    cells.push_back({n, xi, proto, std::nullopt});
                } else {
                    for (std::size_t s : spec.fixed_group_sizes) cells.push_back({n, xi, proto, s});
                }
            }

    std::vector<ResultRow> rows;
    rows.reserve(cells.size());
    for (const auto& cell : cells)
        rows.push_back(run_cell(spec, base_params, cell.n, cell.xi, cell.proto, cell.group_size));

    std::sort(rows.begin(), rows.end(), [](const ResultRow& a, const ResultRow& b) {
        if (a.n != b.n) return a.n < b.n;
        if (a.xi != b.xi) return a.xi < b.xi;
        const int ra = detail::protocol_rank(a.protocol);
        const int rb = detail::protocol_rank(b.protocol);
        if (ra != rb) return ra < rb;
        return a.group_size.value_or(0) < b.group_size.value_or(0);
    });
    return rows;
}

// ---------------------------------------------------------------------
// Result persistence

namespace detail {

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
    return v ? fmt_double(*v) : std::string{};
}

}  // namespace detail

inline constexpr const char* kResultCsvHeader =
    "n,xi,protocol,group_size,mean_delay_s,delay_stderr,mean_eta_pct,eta_stderr,"
    "unstable_fraction,collision_rate,mean_rounds,replications";

inline std::string rows_to_csv(const std::vector<ResultRow>& rows) {
    std::ostringstream os;
    os << kResultCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.n << ',' << detail::fmt_double(r.xi) << ',' << sim::protocol_name(r.protocol) << ','
           << (r.group_size ? std::to_string(*r.group_size) : std::string{}) << ','
           << detail::fmt_opt(r.mean_delay_s) << ',' << detail::fmt_double(r.delay_stderr) << ','
           << detail::fmt_opt(r.mean_eta_pct) << ',' << detail::fmt_double(r.eta_stderr) << ','
           << detail::fmt_double(r.unstable_fraction) << ',' << detail::fmt_double(r.collision_rate)
           << ',' << detail::fmt_opt(r.mean_rounds) << ',' << r.replications << '\n';
    }
    return os.str();
}

inline nlohmann::ordered_json rows_to_json(const std::vector<ResultRow>& rows) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& r : rows) {
        nlohmann::ordered_json o;
        o["n"] = r.n;
        o["xi"] = r.xi;
        o["protocol"] = sim::protocol_name(r.protocol);
        if (r.group_size)
            o["group_size"] = *r.group_size;
        else
            o["group_size"] = nullptr;
        if (r.mean_delay_s)
            o["mean_delay_s"] = *r.mean_delay_s;
        else
            o["mean_delay_s"] = nullptr;
        o["delay_stderr"] = r.delay_stderr;
        if (r.mean_eta_pct)
            o["mean_eta_pct"] = *r.mean_eta_pct;
        else
            o["mean_eta_pct"] = nullptr;
        o["eta_stderr"] = r.eta_stderr;
        o["unstable_fraction"] = r.unstable_fraction;
        o["collision_rate"] = r.collision_rate;
        if (r.mean_rounds)
            o["mean_rounds"] = *r.mean_rounds;
        else
            o["mean_rounds"] = nullptr;
        o["replications"] = r.replications;
        arr.push_back(std::move(o));
    }
    return arr;
}

inline void write_text_file(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open for writing: " + path.string());
    f << content;
    if (!f) throw IoError("write failed: " + path.string());
}

inline void write_rows(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                       const std::vector<ResultRow>& rows) {
    write_text_file(csv_path, rows_to_csv(rows));
    write_text_file(json_path, rows_to_json(rows).dump(1) + "\n");
}

// ---------------------------------------------------------------------
// Linear-vs-binary comparison at fixed group sizes

struct DeltaRow {
    std::optional<std::size_t> group_size;
    std::size_t n = 0;
    double xi = 0.0;
    std::optional<double> delta_delay_s;  ///< linear minus binary
    std::optional<double> delta_eta_pct;  ///< linear minus binary
    double delay_stderr = 0.0;            ///< combined stderr of the difference
};

/// Pairs up linear- and binary-search rows over identical cells and
/// differences them (linear minus binary throughout).
inline std::vector<DeltaRow> delta_table(const std::vector<ResultRow>& ls_rows,
                                         const std::vector<ResultRow>& bs_rows) {
    if (ls_rows.size() != bs_rows.size())
        throw std::domain_error("delta_table: row sets differ in size");
    std::vector<DeltaRow> out;
    out.reserve(ls_rows.size());
    for (std::size_t i = 0; i < ls_rows.size(); ++i) {
        const auto& l = ls_rows[i];
        const auto& b = bs_rows[i];
        if (l.n != b.n || l.xi != b.xi || l.group_size != b.group_size)
            throw std::domain_error("delta_table: mismatched cells");
        DeltaRow d;
        d.group_size = l.group_size;
        d.n = l.n;
        d.xi = l.xi;
        if (l.mean_delay_s && b.mean_delay_s) {
            d.delta_delay_s = *l.mean_delay_s - *b.mean_delay_s;
            d.delay_stderr = std::hypot(l.delay_stderr, b.delay_stderr);
        }
        if (l.mean_eta_pct && b.mean_eta_pct) d.delta_eta_pct = *l.mean_eta_pct - *b.mean_eta_pct;
        out.push_back(d);
    }
    return out;
}

inline constexpr const char* kDeltaCsvHeader =
    "n,xi,group_size,delta_delay_s,delta_delay_stderr,delta_eta_pct";

inline std::string deltas_to_csv(const std::vector<DeltaRow>& rows) {
    std::ostringstream os;
    os << kDeltaCsvHeader << '\n';
    for (const auto& r : rows) {
        os << r.n << ',' << detail::fmt_double(r.xi) << ','
           << (r.group_size ? std::to_string(*r.group_size) : std::string{}) << ','
           << detail::fmt_opt(r.delta_delay_s) << ',' << detail::fmt_double(r.delay_stderr) << ','
           << detail::fmt_opt(r.delta_eta_pct) << '\n';
    }
    return os.str();
}

// ---------------------------------------------------------------------
// Collision-resolution round report

/// Per-round comparison of the analytic resolution curves against Monte
/// Carlo splitting, plus the live-protocol histogram of the same quantity.
struct BoundsReport {
    std::size_t group_size = 0;
    double xi = 0.0;
    double measured_backlog = 0.0;    ///< sum over nodes of lambda_n * measured mean gap
    double mean_group_stock = 0.0;    ///< mean of sum(lambda_i tau_i) per top-level poll
    double activation_prob_hat = 0.0; ///< uniform-activation equivalent of the stock
    double conditional_mean_m = 0.0;  ///< E[active nodes | collision] under that activation
    std::uint64_t mc_trials = 0;

    struct Row {
        int round = 0;
        double single_m2 = 0.0;        ///< per-node resolution curve, two colliders
        double single_mbar = 0.0;      ///< per-node curve at the conditional mean count
        double bound_optimistic = 0.0; ///< clamped all-resolved bound at m = 2
        double bound_pessimistic = 0.0;///< exponential bound factor at the measured backlog
        double exact_m2 = 0.0;
        double exact_mbar = 0.0;
        double mc_cdf = 0.0;           ///< synthetic resolver, P(all resolved by round)
        double mc_stderr = 0.0;
        double protocol_cdf = 0.0;     ///< live-protocol resolution histogram CDF
    };
    std::vector<Row> rows;
};

/// Builds the round report for one group size: measures the live protocol
/// at load xi, then exercises the production resolver on synthetic active
/// sets drawn from the conditional collision-size law at the measured
/// activation level.
inline BoundsReport bounds_report(std::size_t group_size, std::size_t rounds, double xi,
                                  const NetworkParams& base_params, double p_thr,
                                  std::uint64_t slot_budget, std::uint64_t mc_trials,
                                  std::uint64_t seed) {
    if (group_size < 2) throw std::domain_error("bounds_report: group size must be >= 2");
    if (!(xi > 0.0) || !(xi < 1.0)) throw std::domain_error("bounds_report: xi outside (0,1)");

    NetworkParams params = base_params;
    params.n_nodes = group_size;

    const auto rates = allocate_rates(group_size, xi, params.t_p, mix_seed(seed, 0xBACC10ULL));
    sim::ProtocolConfig proto;
    proto.kind = sim::Protocol::WUR_BS;
    proto.p_thr = p_thr;
    sim::Horizon horizon;
    horizon.max_events = slot_budget;
    const auto out = sim::simulate(params, rates, proto, horizon, mix_seed(seed, 0x51D5ULL));

    BoundsReport rep;
    rep.group_size = group_size;
    rep.xi = xi;
    rep.mc_trials = mc_trials;
    for (std::size_t i = 0; i < group_size; ++i)
        rep.measured_backlog += rates.lambdas[i] * out.node_mean_gap[i];
    rep.mean_group_stock =
        out.group_polls > 0 ? out.group_stock_sum / static_cast<double>(out.group_polls) : 0.0;
    rep.activation_prob_hat = std::clamp(rep.mean_group_stock / static_cast<double>(group_size), 1e-9, 0.999);

    // conditional collision-size law at the measured activation level
    std::vector<double> m_pmf;  // index 0 -> m = 2
    double mean_m = 0.0;
    {
        double tail = 1.0;
        for (std::int64_t m = 2; m <= static_cast<std::int64_t>(group_size); ++m) {
            const double p = analytic::active_given_collision(m, group_size, rep.activation_prob_hat);
            m_pmf.push_back(p);
            mean_m += p * static_cast<double>(m);
            tail -= p;
            if (tail < 1e-12 && m >= 4) break;
        }
    }
    rep.conditional_mean_m = mean_m;

    // synthetic Monte Carlo through the production splitting logic
    std::vector<double> mc_cdf(rounds + 1, 0.0);
    {
        Rng rng(mix_seed(seed, 0xD1CEULL));
        std::vector<double> cum(m_pmf.size());
        double acc = 0.0;
        for (std::size_t i = 0; i < m_pmf.size(); ++i) {
            acc += m_pmf[i];
            cum[i] = acc;
        }
        std::vector<std::uint64_t> hist(rounds + 2, 0);
        std::vector<double> probs(group_size, 0.5);
        std::vector<char> active(group_size, 0);
        std::vector<std::size_t> ids(group_size);
        for (std::uint64_t t = 0; t < mc_trials; ++t) {
            const double u = rng.uniform01() * acc;
            std::size_t mi = 0;
            while (mi + 1 < cum.size() && cum[mi] < u) ++mi;
            const std::size_t m = mi + 2;

            for (std::size_t i = 0; i < group_size; ++i) ids[i] = i;
            for (std::size_t i = 0; i < m; ++i) {
                const auto j = static_cast<std::size_t>(rng.uniform_int(
                    static_cast<std::int64_t>(i), static_cast<std::int64_t>(group_size) - 1));
                std::swap(ids[i], ids[j]);
            }
            std::fill(active.begin(), active.end(), 0);
            for (std::size_t i = 0; i < m; ++i) active[ids[i]] = 1;
            const auto plan = sim::binary_resolution_plan(probs, active);
            hist[std::min<std::size_t>(plan.max_depth, rounds + 1)] += 1;
        }
        std::uint64_t running = 0;
        for (std::size_t r = 0; r <= rounds; ++r) {
            running += hist[r];
            mc_cdf[r] = static_cast<double>(running) / static_cast<double>(mc_trials);
        }
    }

    // live-protocol CDF over its own resolution events
    std::vector<double> proto_cdf(rounds + 1, 0.0);
    {
        std::uint64_t total = 0;
        for (auto v : out.resolution_rounds_all) total += v;
        std::uint64_t running = 0;
        for (std::size_t r = 0; r <= rounds; ++r) {
            if (r < out.resolution_rounds_all.size()) running += out.resolution_rounds_all[r];
            proto_cdf[r] = total > 0 ? static_cast<double>(running) / static_cast<double>(total) : 0.0;
        }
    }

    const auto mbar_round = static_cast<std::int64_t>(
        std::clamp<double>(std::llround(std::max(2.0, mean_m)), 2.0, static_cast<double>(group_size)));
    for (std::size_t r = 0; r <= rounds; ++r) {
        BoundsReport::Row row;
        row.round = static_cast<int>(r);
        const auto ri = static_cast<std::int64_t>(r);
        row.single_m2 = analytic::binary_round_success_single(ri, 2, group_size);
        row.single_mbar = analytic::binary_round_success_single(ri, mbar_round, group_size);
        row.bound_optimistic = r == 0 ? 0.0 : analytic::resolve_all_bound(ri, 2, group_size).clamped;
        row.bound_pessimistic = analytic::resolve_all_exp_curve(ri, rep.measured_backlog);
        row.exact_m2 = r == 0 ? 0.0 : analytic::resolve_all_exact(ri, 2, group_size);
        row.exact_mbar = r == 0 ? 0.0 : analytic::resolve_all_exact(ri, mbar_round, group_size);
        row.mc_cdf = mc_cdf[r];
        row.mc_stderr = std::sqrt(std::max(mc_cdf[r] * (1.0 - mc_cdf[r]), 1e-12) /
                                  static_cast<double>(mc_trials));
        row.protocol_cdf = proto_cdf[r];
        rep.rows.push_back(row);
    }
    return rep;
}

inline constexpr const char* kBoundsCsvHeader =
    "group_size,xi,round,single_m2,single_mbar,bound_optimistic,bound_pessimistic,"
    "exact_m2,exact_mbar,mc_cdf,mc_stderr,protocol_cdf";

inline std::string bounds_to_csv(const BoundsReport& rep) {
    std::ostringstream os;
    os << kBoundsCsvHeader << '\n';
    for (const auto& r : rep.rows) {
        os << rep.group_size << ',' << detail::fmt_double(rep.xi) << ',' << r.round << ','
           << detail::fmt_double(r.single_m2) << ',' << detail::fmt_double(r.single_mbar) << ','
           << detail::fmt_double(r.bound_optimistic) << ',' << detail::fmt_double(r.bound_pessimistic)
           << ',' << detail::fmt_double(r.exact_m2) << ',' << detail::fmt_double(r.exact_mbar) << ','
           << detail::fmt_double(r.mc_cdf) << ',' << detail::fmt_double(r.mc_stderr) << ','
           << detail::fmt_double(r.protocol_cdf) << '\n';
    }
    return os.str();
}

}  // namespace wursim::experiment
