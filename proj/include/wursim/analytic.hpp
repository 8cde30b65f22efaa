#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "wursim/params.hpp"

namespace wursim::analytic {

/// One member of a candidate polling group: its arrival rate and the
/// time elapsed since its last polling slot.
struct GroupMember {
    std::size_t node_id = 0;
    double lambda = 0.0;  ///< packets per second
    double tau = 0.0;     ///< seconds since end of last poll
};

/// The (lambda_i, tau_i) pairs all group probability formulas operate on.
struct GroupSnapshot {
    std::vector<GroupMember> members;

    std::size_t size() const { return members.size(); }

    void validate() const {
        std::unordered_set<std::size_t> ids;
        for (const auto& m : members) {
            if (m.lambda < 0.0 || !std::isfinite(m.lambda))
                throw std::domain_error("GroupSnapshot: lambda must be finite and >= 0");
            if (m.tau < 0.0) throw std::domain_error("GroupSnapshot: tau must be >= 0");
            if (!ids.insert(m.node_id).second)
                throw std::domain_error("GroupSnapshot: node ids must be distinct");
        }
    }
};

/// Poisson mass at k for mean mu, stable for large mu.
inline double poisson_pmf(double mu, std::int64_t k) {
    if (k < 0) return 0.0;
    if (mu == 0.0) return k == 0 ? 1.0 : 0.0;
    if (k == 0) return std::exp(-mu);
    return std::exp(static_cast<double>(k) * std::log(mu) - mu - std::lgamma(static_cast<double>(k) + 1.0));
}

/// Probability that a polling slot of a node with rate `lambda`, unpolled
/// for `tau` seconds, lasts k*t_p + t_wu + tau0 (i.e. returns k packets).
inline double slot_duration_pmf(double lambda, double tau, const NetworkParams& params, std::int64_t k) {
    params.validate();
    if (lambda < 0.0 || tau < 0.0 || k < 0)
        throw std::domain_error("slot_duration_pmf: lambda, tau and k must be non-negative");
    return poisson_pmf(lambda * tau, k);
}

/// Probability that no group member has anything to send.
inline double group_idle_prob(const GroupSnapshot& group) {
    group.validate();
    double total = 0.0;
    for (const auto& m : group.members) total += m.lambda * m.tau;
    return std::exp(-total);
}

/// Probability that exactly one group member has pending data.
inline double group_success_prob(const GroupSnapshot& group) {
    group.validate();
    double total = 0.0;
    for (const auto& m : group.members) total += m.lambda * m.tau;
    double sum = 0.0;
    for (const auto& m : group.members) {
        const double x = m.lambda * m.tau;
        // (1 - e^-x) * exp(-(total - x))
        sum += -std::expm1(-x) * std::exp(-(total - x));
    }
    return sum;
}

/// Probability that two or more group members are active simultaneously.
/// A group of fewer than two members cannot collide.
inline double group_collision_prob(const GroupSnapshot& group) {
    if (group.size() < 2) {
        group.validate();
        return 0.0;
    }
    const double p = 1.0 - group_idle_prob(group) - group_success_prob(group);
    return std::clamp(p, 0.0, 1.0);
}

/// Closed-form unicast polling model: cycle moments, per-node delay,
/// power and energy per packet.
struct TdmaModel {
    double mean_cycle = 0.0;          ///< E[T_u], seconds
    double second_moment_cycle = 0.0; ///< E[T_u^2], s^2
    double mean_pkts_per_cycle = 0.0; ///< E[K]
    std::vector<double> per_node_delay;             ///< seconds
    std::vector<double> per_node_power;             ///< watts
    std::vector<double> per_node_energy_per_packet; ///< joules (inf for lambda = 0)
};

inline TdmaModel tdma_model(const NetworkParams& params, const NodeRates& rates) {
    params.validate();
    rates.validate(params.t_p);
    if (rates.lambdas.size() != params.n_nodes)
        throw std::domain_error("tdma_model: rates length must equal n_nodes");

    const double big_lambda = rates.total_rate();
    const double xi = big_lambda * params.t_p;
    if (xi >= 1.0)
        throw UnstableSystemError("tdma_model: aggregate load >= 1, polling cycle diverges");

    const double n = static_cast<double>(params.n_nodes);
    const double base = n * params.idle_slot();

    TdmaModel m;
    m.mean_cycle = base / (1.0 - xi);
    m.mean_pkts_per_cycle = big_lambda * m.mean_cycle;

    // E[K^2] for Poisson K with mean Lambda*E[T]; plugged into the
    // expansion of E[(base + K*t_p)^2].
    const double ek = m.mean_pkts_per_cycle;
    const double ek2 = ek + ek * ek;
    m.second_moment_cycle = base * base + 2.0 * base * params.t_p * ek + params.t_p * params.t_p * ek2;

    const double residual = m.second_moment_cycle / m.mean_cycle;
    m.per_node_delay.reserve(rates.lambdas.size());
    m.per_node_power.reserve(rates.lambdas.size());
    m.per_node_energy_per_packet.reserve(rates.lambdas.size());
    for (double lam : rates.lambdas) {
        m.per_node_delay.push_back(residual * (1.0 + lam * params.t_p) / 2.0);
        const double power = n * params.e_wu / m.mean_cycle + lam * params.e_tx;
        m.per_node_power.push_back(power);
        m.per_node_energy_per_packet.push_back(
            lam > 0.0 ? power / lam : std::numeric_limits<double>::infinity());
    }
    return m;
}

/// Per-node delay by the reduced closed form, algebraically equal to the
/// moment route in tdma_model (the two are cross-checked in tests).
inline std::vector<double> tdma_delay_closed_form(const NetworkParams& params, const NodeRates& rates) {
    params.validate();
    rates.validate(params.t_p);
    const double big_lambda = rates.total_rate();
    const double xi = big_lambda * params.t_p;
    if (xi >= 1.0)
        throw UnstableSystemError("tdma_delay_closed_form: aggregate load >= 1");
    const double base = static_cast<double>(params.n_nodes) * params.idle_slot();
    const double residual = base / (1.0 - xi) + params.t_p * params.t_p * big_lambda;
    std::vector<double> out;
    out.reserve(rates.lambdas.size());
    for (double lam : rates.lambdas)
        out.push_back(residual * (1.0 + lam * params.t_p) / 2.0);
    return out;
}

/// Mean delay weighted by each node's share of the traffic.
inline double packet_mean_delay(const std::vector<double>& per_node_delay, const NodeRates& rates) {
    const double big_lambda = rates.total_rate();
    if (big_lambda <= 0.0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < per_node_delay.size(); ++i) acc += rates.lambdas[i] * per_node_delay[i];
    return acc / big_lambda;
}

/// Minimum wall time of a linear (node-by-node) collision resolution:
/// one unicast poll per member plus the two collided packets.
inline double linear_resolution_floor(std::size_t group_size, const NetworkParams& params) {
    params.validate();
    if (group_size < 2)
        throw std::domain_error("linear_resolution_floor: no collision is possible for G < 2");
    return static_cast<double>(group_size) * params.idle_slot() + 2.0 * params.t_p;
}

/// Collision probability of a group whose members share activation
/// probability p_a.
inline double uniform_collision_prob(double p_a, std::size_t group_size) {
    if (p_a < 0.0 || p_a > 1.0) throw std::domain_error("uniform_collision_prob: p_a outside [0,1]");
    const double g = static_cast<double>(group_size);
    if (p_a == 0.0) return 0.0;
    if (p_a == 1.0) return group_size >= 2 ? 1.0 : 0.0;
    const double q = 1.0 - p_a;
    const double p = 1.0 - std::pow(q, g) - g * p_a * std::pow(q, g - 1.0);
    return std::clamp(p, 0.0, 1.0);
}

/// Binomial mass: exactly m of group_size nodes active at probability p_a.
inline double active_count_pmf(std::int64_t m, std::size_t group_size, double p_a) {
    if (p_a < 0.0 || p_a > 1.0) throw std::domain_error("active_count_pmf: p_a outside [0,1]");
    if (m < 0 || m > static_cast<std::int64_t>(group_size))
        throw std::domain_error("active_count_pmf: m outside [0, G]");
    const double g = static_cast<double>(group_size);
    const double md = static_cast<double>(m);
    if (p_a == 0.0) return m == 0 ? 1.0 : 0.0;
    if (p_a == 1.0) return m == static_cast<std::int64_t>(group_size) ? 1.0 : 0.0;
    const double lchoose = std::lgamma(g + 1.0) - std::lgamma(md + 1.0) - std::lgamma(g - md + 1.0);
    return std::exp(lchoose + md * std::log(p_a) + (g - md) * std::log1p(-p_a));
}

/// Active-count mass conditioned on a collision (m >= 2).
inline double active_given_collision(std::int64_t m, std::size_t group_size, double p_a) {
    if (m < 2) throw std::domain_error("active_given_collision: m must be >= 2");
    const double denom = uniform_collision_prob(p_a, group_size);
    if (denom <= 0.0)
        throw std::domain_error("active_given_collision: conditional undefined, collision probability is zero");
    return active_count_pmf(m, group_size, p_a) / denom;
}

/// Probability that one tagged active node (out of m) has been isolated,
/// and therefore served, by the end of split round r.
inline double binary_round_success_single(std::int64_t r, std::int64_t m, std::size_t group_size) {
    if (m < 1) throw std::domain_error("binary_round_success_single: m must be >= 1");
    if (m > static_cast<std::int64_t>(group_size))
        throw std::domain_error("binary_round_success_single: m must be <= G");
    if (r < 0) throw std::domain_error("binary_round_success_single: r must be >= 0");
    if (m == 1) return 1.0;  // empty product
    const double g = static_cast<double>(group_size);
    const double gr = g - std::ldexp(g, static_cast<int>(-std::min<std::int64_t>(r, 1023)));
    if (static_cast<double>(m) > gr + 1.0) return 0.0;
    double prod = 1.0;
    for (std::int64_t l = 1; l < m; ++l)
        prod *= (gr + 1.0 - static_cast<double>(l)) / (g + 1.0 - static_cast<double>(l));
    return prod;
}

/// Analytic bound on the probability that all m collided nodes are fully
/// resolved by split round r. `raw` can exceed 1; `clamped` is the usable
/// probability value.
struct ResolveAllBound {
    double raw = 0.0;
    double clamped = 0.0;
};

inline ResolveAllBound resolve_all_bound(std::int64_t r, std::int64_t m, std::size_t group_size) {
    if (r < 1) throw std::domain_error("resolve_all_bound: r must be >= 1");
    if (m < 2) throw std::domain_error("resolve_all_bound: m must be >= 2");
    if (m > static_cast<std::int64_t>(group_size))
        throw std::domain_error("resolve_all_bound: m must be <= G");
    const double g = static_cast<double>(group_size);
    const double md = static_cast<double>(m);
    const double log_prefactor = md * std::log(g) + std::lgamma(g - md + 1.0) + std::lgamma(md + 1.0) -
                                 std::lgamma(g + 1.0);
    const double expo = -md * md / std::ldexp(1.0, static_cast<int>(std::min<std::int64_t>(r, 1022)) + 1);
    ResolveAllBound b;
    b.raw = std::exp(log_prefactor + expo);
    b.clamped = std::min(1.0, b.raw);
    return b;
}

/// Exponential factor of the resolve-all bound alone, as plotted for the
/// optimistic/pessimistic round-CDF reference curves. m may be fractional
/// (a measured mean backlog). Zero at r = 0 by convention: nothing can be
/// resolved before the first split.
inline double resolve_all_exp_curve(std::int64_t r, double m) {
    if (r <= 0) return 0.0;
    return std::min(1.0, std::exp(-m * m / std::ldexp(1.0, static_cast<int>(std::min<std::int64_t>(r, 1022)) + 1)));
}

/// Exact probability that m uniformly placed active nodes land in m
/// distinct subgroups when the group is split into 2^r equal parts
/// (fractional part sizes when 2^r does not divide G).
inline double resolve_all_exact(std::int64_t r, std::int64_t m, std::size_t group_size) {
    if (r < 0) throw std::domain_error("resolve_all_exact: r must be >= 0");
    if (m < 2) throw std::domain_error("resolve_all_exact: m must be >= 2");
    if (m > static_cast<std::int64_t>(group_size))
        throw std::domain_error("resolve_all_exact: m must be <= G");
    if (r < 63 && m > (std::int64_t{1} << r)) return 0.0;  // pigeonhole
    const double g = static_cast<double>(group_size);
    const double sub = std::ldexp(g, static_cast<int>(-std::min<std::int64_t>(r, 1023)));  // G / 2^r
    double prod = 1.0;
    for (std::int64_t i = 1; i < m; ++i) {
        const double num = g - static_cast<double>(i) * sub;
        if (num <= 0.0) return 0.0;
        prod *= num / (g - static_cast<double>(i));
    }
    return std::min(1.0, prod);
}

}  // namespace wursim::analytic
