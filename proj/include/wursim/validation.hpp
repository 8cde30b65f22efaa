#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "wursim/analytic.hpp"
#include "wursim/experiment.hpp"
#include "wursim/grouping.hpp"
#include "wursim/params.hpp"
#include "wursim/simcore.hpp"

namespace wursim::validation {

struct CheckResult {
    std::string name;
    bool passed = false;
    std::string detail;
};

struct CheckOptions {
    std::size_t n = 100;          ///< network size for simulation checks
    double xi = 0.1;              ///< aggregate load for simulation checks
    std::size_t group_size = 10;  ///< group size for enumeration checks
    std::uint64_t events = 100000;
    std::uint64_t mc_trials = 100000;
    std::uint64_t seed = 1;
    double p_thr = 0.05;
};

inline std::vector<std::string> all_check_names() {
    return {"group-probs", "tdma-closed-form", "tdma-cycle",   "tdma-delay",
            "group-slot-freqs", "bound-ordering", "resolver-mc", "determinism"};
}

namespace detail {

inline std::string fmt(double v) {
    std::ostringstream os;
    os.precision(8);
    os << v;
    return os.str();
}

/// Exhaustive activation-subset enumeration, written against the formula
/// implementations it is checking.
struct Enumerated {
    double idle = 0.0;
    double success = 0.0;
    double collision = 0.0;
};

inline Enumerated enumerate_activations(const std::vector<double>& lambda_tau) {
    Enumerated out;
    const std::size_t g = lambda_tau.size();
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << g); ++mask) {
        double prob = 1.0;
        int active = 0;
        for (std::size_t i = 0; i < g; ++i) {
            const double p_on = -std::expm1(-lambda_tau[i]);
            if (mask >> i & 1) {
                prob *= p_on;
                ++active;
            } else {
                prob *= 1.0 - p_on;
            }
        }
        (active == 0 ? out.idle : active == 1 ? out.success : out.collision) += prob;
    }
    return out;
}

}  // namespace detail

/// Group idle/success/collision formulas against exhaustive enumeration
/// and the closure identity, on random snapshots.
inline CheckResult check_group_probs(const CheckOptions& opts) {
    std::mt19937_64 gen(opts.seed);
    std::uniform_real_distribution<double> lt(0.0, 3.0);
    const std::size_t g = std::min<std::size_t>(opts.group_size, 15);
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> lambda_tau(g);
        analytic::GroupSnapshot snap;
        for (std::size_t i = 0; i < g; ++i) {
            lambda_tau[i] = lt(gen);
            snap.members.push_back({i, lambda_tau[i], 1.0});
        }
        const auto ref = detail::enumerate_activations(lambda_tau);
        const double pi = analytic::group_idle_prob(snap);
        const double ps = analytic::group_success_prob(snap);
        const double pc = analytic::group_collision_prob(snap);
        worst = std::max({worst, std::abs(pi - ref.idle), std::abs(ps - ref.success),
                          std::abs(pc - ref.collision), std::abs(pi + ps + pc - 1.0)});
    }
    CheckResult r{"group-probs", worst <= 1e-12,
                  "max deviation from 2^" + std::to_string(g) + " enumeration " + detail::fmt(worst) +
                      " tol 1e-12"};
    return r;
}

/// Closed-form unicast delay against the cycle-moment route.
inline CheckResult check_tdma_closed_form(const CheckOptions&) {
    double worst = 0.0;
    for (std::size_t n : {10ul, 100ul, 1000ul}) {
        for (double xi : {0.01, 0.1, 0.3, 0.5, 0.9}) {
            auto params = default_params(n);
            auto rates = uniform_rates(n, xi, params.t_p);
            auto model = analytic::tdma_model(params, rates);
            auto cf = analytic::tdma_delay_closed_form(params, rates);
            for (std::size_t i = 0; i < n; ++i)
                worst = std::max(worst, std::abs(model.per_node_delay[i] - cf[i]) / cf[i]);
        }
    }
    return {"tdma-closed-form", worst <= 1e-9,
            "max relative gap between delay routes " + detail::fmt(worst) + " tol 1e-9"};
}

/// Simulated mean polling-cycle length against the closed form.
inline CheckResult check_tdma_cycle(const CheckOptions& opts) {
    auto params = default_params(opts.n);
    auto rates = uniform_rates(opts.n, opts.xi, params.t_p);
    auto model = analytic::tdma_model(params, rates);
    sim::ProtocolConfig proto;
    proto.kind = sim::Protocol::TDMA;
    auto out = sim::simulate(params, rates, proto, sim::Horizon{opts.events, 1e18}, opts.seed);

    double mean = 0.0;
    for (double c : out.cycle_lengths) mean += c;
    mean /= static_cast<double>(out.cycle_lengths.size());
    double var = 0.0;
    for (double c : out.cycle_lengths) var += (c - mean) * (c - mean);
    const double se = std::sqrt(var / static_cast<double>(out.cycle_lengths.size() - 1) /
                                static_cast<double>(out.cycle_lengths.size()));
    const double gap = std::abs(mean - model.mean_cycle);
    return {"tdma-cycle", gap <= 3.0 * se + 1e-12,
            "simulated " + detail::fmt(mean) + " expected " + detail::fmt(model.mean_cycle) +
                " gap " + detail::fmt(gap) + " tol 3se=" + detail::fmt(3.0 * se)};
}

/// Simulated unicast waiting time against the per-node delay formula.
inline CheckResult check_tdma_delay(const CheckOptions& opts) {
    auto params = default_params(opts.n);
    auto rates = experiment::allocate_rates(opts.n, opts.xi, params.t_p, mix_seed(opts.seed, 17));
    auto model = analytic::tdma_model(params, rates);
    const double expected = analytic::packet_mean_delay(model.per_node_delay, rates);

    sim::ProtocolConfig proto;
    proto.kind = sim::Protocol::TDMA;
    auto out = sim::simulate(params, rates, proto, sim::Horizon{opts.events, 1e18}, opts.seed);
    double mean = 0.0;
    for (double d : out.queue_delays) mean += d;
    mean /= static_cast<double>(out.queue_delays.size());
    double var = 0.0;
    for (double d : out.queue_delays) var += (d - mean) * (d - mean);
    const double se = std::sqrt(var / static_cast<double>(out.queue_delays.size() - 1) /
                                static_cast<double>(out.queue_delays.size()));
    const double gap = std::abs(mean - expected);
    return {"tdma-delay", gap <= 3.0 * se,
            "simulated wait " + detail::fmt(mean) + " expected " + detail::fmt(expected) + " gap " +
                detail::fmt(gap) + " tol 3se=" + detail::fmt(3.0 * se)};
}

/// Fixed-group slot outcome frequencies against the per-poll predictions.
inline CheckResult check_group_slot_freqs(const CheckOptions& opts) {
    auto params = default_params(opts.group_size);
    auto rates = uniform_rates(opts.group_size, 0.05, params.t_p);
    sim::ProtocolConfig proto;
    proto.kind = sim::Protocol::WUR_BS;
    proto.p_thr = opts.p_thr;
    proto.fixed_group_size = opts.group_size;
    auto out = sim::simulate(params, rates, proto, sim::Horizon{opts.events, 1e18}, opts.seed);

    const double worst_sigma = std::max(
        {std::abs(static_cast<double>(out.top_slots.idle) - out.predicted_idle_sum) /
             std::max(1.0, std::sqrt(out.predicted_idle_var)),
         std::abs(static_cast<double>(out.top_slots.success) - out.predicted_success_sum) /
             std::max(1.0, std::sqrt(out.predicted_success_var)),
         std::abs(static_cast<double>(out.top_slots.collision) - out.predicted_collision_sum) /
             std::max(1.0, std::sqrt(out.predicted_collision_var))});
    return {"group-slot-freqs", worst_sigma <= 3.0,
            "worst idle/success/collision deviation " + detail::fmt(worst_sigma) + " sigma, tol 3"};
}

/// Exact distinct-placement probability never exceeds the clamped bound.
inline CheckResult check_bound_ordering(const CheckOptions&) {
    double worst = -1.0;
    for (std::size_t g : {16ul, 64ul, 256ul}) {
        for (std::int64_t r = 1; r <= 12; ++r) {
            for (std::int64_t m = 2; m <= 10; ++m) {
                const double exact = analytic::resolve_all_exact(r, m, g);
                const double bound = analytic::resolve_all_bound(r, m, g).clamped;
                worst = std::max(worst, exact - bound);
            }
        }
    }
    return {"bound-ordering", worst <= 1e-12,
            "max (exact - clamped bound) " + detail::fmt(worst) + " tol 1e-12"};
}

/// Monte Carlo splitting through the production resolver against the
/// exact placement probability.
inline CheckResult check_resolver_mc(const CheckOptions& opts) {
    const std::size_t g = 64;
    double worst_sigma = 0.0;
    for (std::size_t m : {2ul, 3ul, 5ul}) {
        auto cdf = sim::splitting_round_cdf(g, m, opts.mc_trials, 6, mix_seed(opts.seed, m));
        for (std::size_t r = 1; r <= 6; ++r) {
            const double expect = analytic::resolve_all_exact(static_cast<std::int64_t>(r),
                                                              static_cast<std::int64_t>(m), g);
            const double se = std::sqrt(std::max(expect * (1.0 - expect), 1e-9) /
                                        static_cast<double>(opts.mc_trials));
            worst_sigma = std::max(worst_sigma, std::abs(cdf[r] - expect) / se);
        }
    }
    return {"resolver-mc", worst_sigma <= 3.0,
            "worst deviation " + detail::fmt(worst_sigma) + " sigma over 10^" +
                detail::fmt(std::log10(static_cast<double>(opts.mc_trials))) + " trials, tol 3"};
}

/// Two identically seeded sweeps serialize to identical bytes.
inline CheckResult check_determinism(const CheckOptions& opts) {
    NetworkParams params = default_params(30);
    experiment::SweepSpec spec;
    spec.n_values = {30};
    spec.loads = {0.05, 0.2};
    sim::ProtocolConfig tdma;
    tdma.kind = sim::Protocol::TDMA;
    sim::ProtocolConfig bs;
    bs.kind = sim::Protocol::WUR_BS;
    bs.p_thr = opts.p_thr;
    spec.protocols = {tdma, bs};
    spec.replications = 3;
    spec.slot_budget = 5000;
    spec.base_seed = opts.seed;
    const auto a = experiment::rows_to_csv(experiment::run_sweep(spec, params));
    const auto b = experiment::rows_to_csv(experiment::run_sweep(spec, params));
    return {"determinism", a == b,
            a == b ? "repeated sweep serialized to identical bytes"
                   : "repeated sweep produced different bytes"};
}

inline std::vector<CheckResult> run_checks(const std::vector<std::string>& names,
                                           const CheckOptions& opts) {
    std::vector<CheckResult> results;
    for (const auto& name : names) {
        if (name == "group-probs")
            results.push_back(check_group_probs(opts));
        else if (name == "tdma-closed-form")
            results.push_back(check_tdma_closed_form(opts));
        else if (name == "tdma-cycle")
            results.push_back(check_tdma_cycle(opts));
        else if (name == "tdma-delay")
            results.push_back(check_tdma_delay(opts));
        else if (name == "group-slot-freqs")
            results.push_back(check_group_slot_freqs(opts));
        else if (name == "bound-ordering")
            results.push_back(check_bound_ordering(opts));
        else if (name == "resolver-mc")
            results.push_back(check_resolver_mc(opts));
        else if (name == "determinism")
            results.push_back(check_determinism(opts));
        else
            throw std::domain_error("unknown check: " + name);
    }
    return results;
}

}  // namespace wursim::validation
