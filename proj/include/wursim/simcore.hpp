#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include "wursim/analytic.hpp"
#include "wursim/grouping.hpp"
#include "wursim/params.hpp"
#include "wursim/rng.hpp"

namespace wursim::sim {

enum class Protocol { WUR_LS, WUR_BS, TDMA, ALOHA };

inline const char* protocol_name(Protocol p) {
    switch (p) {
        case Protocol::WUR_LS: return "wur-ls";
        case Protocol::WUR_BS: return "wur-bs";
        case Protocol::TDMA: return "tdma";
        case Protocol::ALOHA: return "aloha";
    }
    return "?";
}

inline std::optional<Protocol> protocol_from_name(const std::string& s) {
    if (s == "wur-ls") return Protocol::WUR_LS;
    if (s == "wur-bs") return Protocol::WUR_BS;
    if (s == "tdma") return Protocol::TDMA;
    if (s == "aloha") return Protocol::ALOHA;
    return std::nullopt;
}

struct ProtocolConfig {
    Protocol kind = Protocol::TDMA;
    double p_thr = 0.05;              ///< collision threshold for multicast group building
    std::size_t backoff_window = 16;  ///< ALOHA backoff window, slots
    std::optional<std::size_t> fixed_group_size;  ///< fixed-size multicast mode

    bool is_multicast() const { return kind == Protocol::WUR_LS || kind == Protocol::WUR_BS; }

    void validate(std::size_t n_nodes) const {
        if (is_multicast() && !(p_thr > 0.0 && p_thr < 1.0))
            throw std::domain_error("ProtocolConfig: p_thr outside (0,1)");
        if (kind == Protocol::ALOHA && backoff_window < 1)
            throw std::domain_error("ProtocolConfig: backoff window must be >= 1 slot");
        if (fixed_group_size && (*fixed_group_size < 1 || *fixed_group_size > n_nodes))
            throw std::domain_error("ProtocolConfig: fixed group size outside [1, N]");
    }
};

/// Stopping rule: a budget of polling/slot events plus an optional cap in
/// simulated seconds, whichever hits first.
struct Horizon {
    std::uint64_t max_events = 100000;
    double max_seconds = std::numeric_limits<double>::infinity();

    void validate() const {
        if (max_events == 0 && !(max_seconds > 0.0))
            throw std::domain_error("Horizon: needs a positive event budget or time cap");
    }
};

struct Packet {
    std::size_t origin_node = 0;
    double created_at = 0.0;
    double delivered_at = -1.0;  ///< negative while pending

    bool pending() const { return delivered_at < created_at; }
};

struct SlotCounts {
    std::uint64_t idle = 0;
    std::uint64_t success = 0;
    std::uint64_t collision = 0;
    std::uint64_t total() const { return idle + success + collision; }
};

struct PerNodeStats {
    std::uint64_t delivered = 0;      ///< packets successfully transmitted (stats window)
    std::uint64_t wakeups_heard = 0;  ///< wake-up messages decoded (stats window)
    std::uint64_t tx_packets = 0;     ///< packet transmissions incl. collided ones (stats window)
    std::uint64_t delay_count = 0;    ///< deliveries contributing to delay stats
    double delay_sum = 0.0;
    double energy_useful = 0.0;
    double energy_total = 0.0;
};

struct SimOutcome {
    std::vector<double> delays;  ///< one entry per delivered packet created after warm-up
    /// Waiting time of the same packets up to the start of the slot that
    /// served them (no wake-up or transmission time included).
    std::vector<double> queue_delays;
    std::vector<PerNodeStats> per_node;
    SlotCounts slots;      ///< every poll / slot, resolution sub-polls included
    SlotCounts top_slots;  ///< top-level polls only (or ALOHA slots)

    /// Collision events by number of split rounds needed to resolve all
    /// frozen-active nodes (index = rounds; multicast protocols only).
    std::vector<std::uint64_t> resolution_rounds_all;
    /// Frozen-active nodes by the round in which their own packets got through.
    std::vector<std::uint64_t> resolution_rounds_single;
    std::uint64_t resolution_events = 0;
    std::uint64_t resolution_polls = 0;

    bool unstable = false;
    double sim_duration = 0.0;
    double warmup_end = 0.0;
    std::uint64_t events_executed = 0;
    std::uint64_t drain_events = 0;     ///< extra steps spent flushing in-flight packets
    std::uint64_t delivered_in_budget = 0;  ///< deliveries inside the event budget

    // exact conservation over the whole run, warm-up included
    std::uint64_t generated = 0;
    std::uint64_t delivered_total = 0;
    std::uint64_t residual_backlog = 0;

    // per-poll predictions accumulated over top-level polls in the stats
    // window, for analytic cross-validation (sums of p and of p*(1-p))
    double predicted_idle_sum = 0.0;
    double predicted_success_sum = 0.0;
    double predicted_collision_sum = 0.0;
    double predicted_idle_var = 0.0;
    double predicted_success_var = 0.0;
    double predicted_collision_var = 0.0;

    /// accumulated group backlog expectation sum(lambda_i * tau_i) over
    /// top-level multicast polls (stats window), and the poll count
    double group_stock_sum = 0.0;
    std::uint64_t group_polls = 0;

    std::vector<double> cycle_lengths;  ///< completed TDMA cycles (stats window)
    std::vector<double> node_mean_gap;  ///< measured mean inter-poll gap per node
    std::vector<std::uint64_t> node_gap_count;

    double packet_mean_delay() const {
        if (delays.empty()) return std::numeric_limits<double>::quiet_NaN();
        double s = 0.0;
        for (double d : delays) s += d;
        return s / static_cast<double>(delays.size());
    }

    double packet_mean_queue_delay() const {
        if (queue_delays.empty()) return std::numeric_limits<double>::quiet_NaN();
        double s = 0.0;
        for (double d : queue_delays) s += d;
        return s / static_cast<double>(queue_delays.size());
    }

    double node_mean_delay() const {
        double s = 0.0;
        std::size_t n = 0;
        for (const auto& pn : per_node) {
            if (pn.delay_count > 0) {
                s += pn.delay_sum / static_cast<double>(pn.delay_count);
                ++n;
            }
        }
        return n > 0 ? s / static_cast<double>(n) : std::numeric_limits<double>::quiet_NaN();
    }

    double collision_rate() const {
        const auto t = slots.total();
        return t > 0 ? static_cast<double>(slots.collision) / static_cast<double>(t) : 0.0;
    }

    double mean_rounds_to_resolve() const {
        std::uint64_t events = 0;
        std::uint64_t weighted = 0;
        for (std::size_t r = 0; r < resolution_rounds_all.size(); ++r) {
            events += resolution_rounds_all[r];
            weighted += resolution_rounds_all[r] * r;
        }
        return events > 0 ? static_cast<double>(weighted) / static_cast<double>(events) : 0.0;
    }
};

/// Per-node energy efficiency in percent; absent when the node consumed
/// no energy at all.
inline std::optional<double> energy_efficiency(const SimOutcome& outcome, std::size_t node) {
    const auto& pn = outcome.per_node.at(node);
    if (pn.energy_total <= 0.0) return std::nullopt;
    if (pn.delivered == 0) return 0.0;
    return 100.0 * pn.energy_useful / pn.energy_total;
}

/// Network-level efficiency: useful transmission energy over everything
/// consumed, in percent.
inline std::optional<double> network_energy_efficiency(const SimOutcome& outcome) {
    double useful = 0.0;
    double total = 0.0;
    for (const auto& pn : outcome.per_node) {
        useful += pn.energy_useful;
        total += pn.energy_total;
    }
    if (total <= 0.0) return std::nullopt;
    return 100.0 * useful / total;
}

/// FNV-1a over the full outcome content; equal digests mean equal runs.
inline std::uint64_t digest(const SimOutcome& o) {
    std::uint64_t h = 1469598103934665603ULL;
    auto mix_bytes = [&h](const void* data, std::size_t len) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 1099511628211ULL;
        }
    };
    auto mix_u64 = [&](std::uint64_t v) { mix_bytes(&v, sizeof v); };
    auto mix_d = [&](double v) { mix_bytes(&v, sizeof v); };

    for (double d : o.delays) mix_d(d);
    for (double d : o.queue_delays) mix_d(d);
    for (const auto& pn : o.per_node) {
        mix_u64(pn.delivered);
        mix_u64(pn.wakeups_heard);
        mix_u64(pn.tx_packets);
        mix_u64(pn.delay_count);
        mix_d(pn.delay_sum);
        mix_d(pn.energy_useful);
        mix_d(pn.energy_total);
    }
    mix_u64(o.slots.idle);
    mix_u64(o.slots.success);
    mix_u64(o.slots.collision);
    mix_u64(o.top_slots.idle);
    mix_u64(o.top_slots.success);
    mix_u64(o.top_slots.collision);
    for (auto v : o.resolution_rounds_all) mix_u64(v);
    for (auto v : o.resolution_rounds_single) mix_u64(v);
    mix_u64(o.resolution_events);
    mix_u64(o.resolution_polls);
    mix_u64(o.unstable ? 1 : 0);
    mix_d(o.sim_duration);
    mix_u64(o.events_executed);
    mix_u64(o.drain_events);
    mix_u64(o.delivered_in_budget);
    mix_u64(o.generated);
    mix_u64(o.delivered_total);
    mix_u64(o.residual_backlog);
    mix_d(o.group_stock_sum);
    mix_u64(o.group_polls);
    for (double d : o.cycle_lengths) mix_d(d);
    for (double d : o.node_mean_gap) mix_d(d);
    return h;
}

/// DFS plan of one binary-search resolution: which subgroups get polled,
/// at which split depth, and which frozen-active members they contain.
struct ResolutionPlan {
    struct SubPoll {
        std::vector<std::size_t> members;  ///< positions into the collided group
        std::vector<std::size_t> actives;  ///< positions with frozen packets
        std::size_t depth = 0;
    };
    std::vector<SubPoll> polls;
    std::size_t max_depth = 0;
};

/// Builds the full recursive splitting plan for a collided group.
/// `probs[i]` is the activation probability and `active[i]` the frozen
/// activity flag of group position i. Pure: no clocks, no energy.
inline ResolutionPlan binary_resolution_plan(const std::vector<double>& probs,
                                             const std::vector<char>& active) {
    ResolutionPlan plan;

    struct Frame {
        std::vector<std::size_t> positions;
        std::size_t depth;
    };
    std::vector<Frame> stack;

    auto split_positions = [&probs](const std::vector<std::size_t>& positions) {
        grouping::CandidatePool pool;
        pool.entries.reserve(positions.size());
        for (std::size_t pos : positions) pool.entries.push_back({pos, probs[pos]});
        grouping::PollingGroup g;
        g.member_ids = positions;
        return grouping::split_group(g, pool);
    };

    {
        std::vector<std::size_t> all(probs.size());
        for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
        auto [l, r] = split_positions(all);
        stack.push_back({std::move(r.member_ids), 1});
        stack.push_back({std::move(l.member_ids), 1});
    }

    while (!stack.empty()) {
        Frame f = std::move(stack.back());
        stack.pop_back();

        ResolutionPlan::SubPoll poll;
        poll.depth = f.depth;
        poll.members = f.positions;
        for (std::size_t pos : f.positions)
            if (active[pos]) poll.actives.push_back(pos);
        plan.max_depth = std::max(plan.max_depth, f.depth);
        const bool collides = poll.actives.size() >= 2;
        plan.polls.push_back(std::move(poll));

        if (collides) {
            auto [l, r] = split_positions(f.positions);
            stack.push_back({std::move(r.member_ids), f.depth + 1});
            stack.push_back({std::move(l.member_ids), f.depth + 1});
        }
    }
    return plan;
}

/// Monte Carlo CDF of the round count needed to separate m uniformly
/// placed active nodes in a group of g, using the production splitting
/// logic on an equal-probability group. cdf[r] = P(all resolved by r).
inline std::vector<double> splitting_round_cdf(std::size_t g, std::size_t m, std::size_t trials,
                                               std::size_t max_round, std::uint64_t seed) {
    if (m < 2 || m > g) throw std::domain_error("splitting_round_cdf: need 2 <= m <= g");
    Rng rng(seed);
    std::vector<double> probs(g, 0.5);
    std::vector<char> active(g, 0);
    std::vector<std::uint64_t> hist(max_round + 2, 0);
    std::vector<std::size_t> ids(g);

    for (std::size_t t = 0; t < trials; ++t) {
        for (std::size_t i = 0; i < g; ++i) ids[i] = i;
        // partial Fisher-Yates: first m entries become the active set
        for (std::size_t i = 0; i < m; ++i) {
            const auto j = static_cast<std::size_t>(
                rng.uniform_int(static_cast<std::int64_t>(i), static_cast<std::int64_t>(g) - 1));
            std::swap(ids[i], ids[j]);
        }
        std::fill(active.begin(), active.end(), 0);
        for (std::size_t i = 0; i < m; ++i) active[ids[i]] = 1;
        auto plan = binary_resolution_plan(probs, active);
        hist[std::min(plan.max_depth, max_round + 1)] += 1;
    }

    std::vector<double> cdf(max_round + 1, 0.0);
    std::uint64_t acc = 0;
    for (std::size_t r = 0; r <= max_round; ++r) {
        acc += hist[r];
        cdf[r] = static_cast<double>(acc) / static_cast<double>(trials);
    }
    return cdf;
}

class Simulator {
public:
    Simulator(const NetworkParams& params, const NodeRates& rates, const ProtocolConfig& proto,
              std::uint64_t seed)
        : params_(params), proto_(proto), rng_(seed) {
        params_.validate();
        rates.validate(params_.t_p);
        proto_.validate(params_.n_nodes);
        if (params_.n_nodes == 0) throw std::domain_error("Simulator: zero nodes");
        if (rates.lambdas.size() != params_.n_nodes)
            throw std::domain_error("Simulator: rates length must equal n_nodes");

        const double xi = rates.aggregate_load;
        warmup_end_ = 5.0 * static_cast<double>(params_.n_nodes) * params_.idle_slot();
        if (xi < 1.0) {
            warmup_end_ /= (1.0 - xi);
            auto model = analytic::tdma_model(params_, rates);
            tdma_reference_delay_ = analytic::packet_mean_delay(model.per_node_delay, rates);
        }

        nodes_.resize(params_.n_nodes);
        for (std::size_t i = 0; i < params_.n_nodes; ++i) {
            nodes_[i].lambda = rates.lambdas[i];
            nodes_[i].next_arrival = next_gap(i);
        }
    }

    SimOutcome run(const Horizon& horizon) {
        horizon.validate();
        out_ = SimOutcome{};
        out_.per_node.resize(nodes_.size());
        out_.warmup_end = warmup_end_;
        out_.resolution_rounds_all.assign(64, 0);
        out_.resolution_rounds_single.assign(64, 0);
        out_.node_mean_gap.assign(nodes_.size(), 0.0);
        out_.node_gap_count.assign(nodes_.size(), 0);
        gap_sum_.assign(nodes_.size(), 0.0);

        if (proto_.kind == Protocol::ALOHA) init_aloha();

        while (out_.events_executed < horizon.max_events && clock_ < horizon.max_seconds &&
               !out_.unstable) {
            switch (proto_.kind) {
                case Protocol::TDMA: step_tdma(); break;
                case Protocol::WUR_LS:
                case Protocol::WUR_BS: step_multicast(); break;
                case Protocol::ALOHA: step_aloha(); break;
            }
            check_stability();
        }

        // flush packets still in flight so reported delays are not
        // right-censored at the horizon; counters and energy stay frozen
        // at the budget boundary
        if (!out_.unstable) {
            stats_end_ = clock_;
            out_.delivered_in_budget = out_.delivered_total;
            draining_ = true;
            const std::uint64_t drain_budget = horizon.max_events;
            std::uint64_t drained = 0;
            while (drained < drain_budget && window_packets_pending()) {
                switch (proto_.kind) {
                    case Protocol::TDMA: step_tdma(); break;
                    case Protocol::WUR_LS:
                    case Protocol::WUR_BS: step_multicast(); break;
                    case Protocol::ALOHA: step_aloha(); break;
                }
                ++drained;
            }
            out_.drain_events = drained;
        }
        finalize();
        return std::move(out_);
    }

private:
    struct Node {
        double lambda = 0.0;
        double next_arrival = std::numeric_limits<double>::infinity();
        std::deque<Packet> queue;  ///< pending packets, created_at ascending
        double anchor = 0.0;       ///< start of the last poll that addressed this node
        std::int64_t scheduled_slot = -1;  ///< ALOHA
    };

    double next_gap(std::size_t i) {
        if (nodes_[i].lambda <= 0.0) return std::numeric_limits<double>::infinity();
        return rng_.exponential(nodes_[i].lambda);
    }

    /// Pulls node i's Poisson arrival stream forward to time t.
    void sync_node(std::size_t i, double t) {
        auto& n = nodes_[i];
        while (n.next_arrival <= t) {
            n.queue.push_back(Packet{i, n.next_arrival, -1.0});
            ++out_.generated;
            n.next_arrival += next_gap(i);
        }
    }

    bool in_stats(double t) const { return !draining_ && t >= warmup_end_; }

    /// True while any packet created inside the stats window is still
    /// queued or not yet realized from its node's arrival stream.
    bool window_packets_pending() const {
        for (const auto& n : nodes_) {
            if (!n.queue.empty() && n.queue.front().created_at <= stats_end_) return true;
            if (n.next_arrival <= stats_end_) return true;
        }
        return false;
    }

    void record_gap(std::size_t i, double t) {
        if (!in_stats(t)) return;
        gap_sum_[i] += t - nodes_[i].anchor;
        ++out_.node_gap_count[i];
    }

    /// Pops `count` packets from the node queue as successfully
    /// transmitted in a slot starting at `slot_start`; the first finishes
    /// at `first_tx_end`, each further one t_p later. Delay statistics
    /// only cover packets created inside the stats window; queue delays
    /// count the wait to the packet's own transmission, net of the slot
    /// preamble.
    void deliver_front(std::size_t node_id, std::size_t count, double slot_start, double first_tx_end,
                       bool stats) {
        auto& n = nodes_[node_id];
        auto& pn = out_.per_node[node_id];
        double tx_end = first_tx_end;
        for (std::size_t j = 0; j < count; ++j) {
            Packet pkt = n.queue.front();
            n.queue.pop_front();
            pkt.delivered_at = tx_end;
            const double created = pkt.created_at;
            ++out_.delivered_total;
            if (draining_) {
                if (created >= warmup_end_ && created <= stats_end_) {
                    const double delay = tx_end - created;
                    out_.delays.push_back(delay);
                    out_.queue_delays.push_back(slot_start - created +
                                                static_cast<double>(j) * params_.t_p);
                    pn.delay_sum += delay;
                    pn.delay_count += 1;
                }
            } else if (stats) {
                pn.tx_packets += 1;
                pn.delivered += 1;
                if (created >= warmup_end_) {
                    const double delay = tx_end - created;
                    out_.delays.push_back(delay);
                    out_.queue_delays.push_back(slot_start - created +
                                                static_cast<double>(j) * params_.t_p);
                    pn.delay_sum += delay;
                    pn.delay_count += 1;
                }
            }
            tx_end += params_.t_p;
        }
    }

    // ------------------------------------------------------------------
    // TDMA: strict round-robin unicast polling
    void step_tdma() {
        const double t = clock_;
        const bool stats = in_stats(t);
        const std::size_t id = rr_index_;
        sync_node(id, t);
        const std::size_t k = nodes_[id].queue.size();

        record_gap(id, t);
        if (stats) {
            out_.per_node[id].wakeups_heard += 1;
            auto& c = k == 0 ? out_.slots.idle : out_.slots.success;
            ++c;
            auto& tc = k == 0 ? out_.top_slots.idle : out_.top_slots.success;
            ++tc;
        }

        deliver_front(id, k, t, t + params_.idle_slot() + params_.t_p, stats);
        nodes_[id].anchor = t;
        clock_ = t + params_.idle_slot() + static_cast<double>(k) * params_.t_p;
        if (!draining_) ++out_.events_executed;

        rr_index_ = (rr_index_ + 1) % nodes_.size();
        if (rr_index_ == 0) {
            if (!draining_ && cycle_start_ >= warmup_end_)
                out_.cycle_lengths.push_back(clock_ - cycle_start_);
            cycle_start_ = clock_;
        }
    }

    // ------------------------------------------------------------------
    // Multicast WUR polling with linear or binary collision resolution
    void step_multicast() {
        const double t = clock_;
        const bool stats = in_stats(t);

        probs_.resize(nodes_.size());
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            probs_[i] = -std::expm1(-nodes_[i].lambda * (t - nodes_[i].anchor));

        if (proto_.fixed_group_size) {
            build_fixed_group_fast(*proto_.fixed_group_size);
        } else {
            grouping::build_group_into(probs_, proto_.p_thr, group_ws_, group_);
        }
        const auto& members = group_.member_ids;

        // realized activity over each member's window (anchor, t]
        frozen_count_.assign(members.size(), 0);
        active_positions_.clear();
        for (std::size_t pos = 0; pos < members.size(); ++pos) {
            const std::size_t id = members[pos];
            sync_node(id, t);
            record_gap(id, t);
            frozen_count_[pos] = nodes_[id].queue.size();
            if (frozen_count_[pos] > 0) active_positions_.push_back(pos);
            if (stats) out_.per_node[id].wakeups_heard += 1;
        }

        if (stats) {
            grouping::GroupProbAccumulator acc;
            double stock = 0.0;
            for (std::size_t id : members) {
                acc.add(probs_[id]);
                stock += nodes_[id].lambda * (t - nodes_[id].anchor);
            }
            out_.group_stock_sum += stock;
            ++out_.group_polls;
            const double pi = acc.idle();
            const double ps = acc.success();
            const double pc = acc.collision();
            out_.predicted_idle_sum += pi;
            out_.predicted_success_sum += ps;
            out_.predicted_collision_sum += pc;
            out_.predicted_idle_var += pi * (1.0 - pi);
            out_.predicted_success_var += ps * (1.0 - ps);
            out_.predicted_collision_var += pc * (1.0 - pc);
        }

        if (!draining_) ++out_.events_executed;

        if (active_positions_.empty()) {
            if (stats) {
                ++out_.slots.idle;
                ++out_.top_slots.idle;
            }
            clock_ = t + params_.idle_slot();
        } else if (active_positions_.size() == 1) {
            const std::size_t id = members[active_positions_[0]];
            const std::size_t k = frozen_count_[active_positions_[0]];
            if (stats) {
                ++out_.slots.success;
                ++out_.top_slots.success;
            }
            deliver_front(id, k, t, t + params_.idle_slot() + params_.t_p, stats);
            clock_ = t + params_.idle_slot() + static_cast<double>(k) * params_.t_p;
        } else {
            if (stats) {
                ++out_.slots.collision;
                ++out_.top_slots.collision;
                ++out_.resolution_events;
            }
            // every collided node transmitted its whole frozen backlog in
            // vain; the gateway waits out the longest transmission
            std::size_t kmax = 0;
            for (std::size_t pos : active_positions_) {
                kmax = std::max(kmax, frozen_count_[pos]);
                if (stats) out_.per_node[members[pos]].tx_packets += frozen_count_[pos];
            }
            clock_ = t + params_.idle_slot() + static_cast<double>(kmax) * params_.t_p;

            if (proto_.kind == Protocol::WUR_LS)
                resolve_linear(group_, frozen_count_, stats);
            else
                resolve_binary(group_, frozen_count_, stats);
        }

        // one rule for every member: the poll that addressed you anchors
        // your next activation window at its start
        for (std::size_t id : members) nodes_[id].anchor = t;
    }

    /// Fixed-group selection against the current probabilities; a group
    /// spanning the whole network skips the selection sort.
    void build_fixed_group_fast(std::size_t size) {
        group_.threshold_used = 1.0;
        group_.member_ids.clear();
        if (size == nodes_.size()) {
            group_.member_ids.reserve(size);
            for (std::size_t i = 0; i < size; ++i) group_.member_ids.push_back(i);
        } else {
            group_ws_.order.resize(nodes_.size());
            for (std::size_t i = 0; i < nodes_.size(); ++i) group_ws_.order[i] = i;
            std::partial_sort(group_ws_.order.begin(),
                              group_ws_.order.begin() + static_cast<std::ptrdiff_t>(size),
                              group_ws_.order.end(), [this](std::size_t a, std::size_t b) {
                                  if (probs_[a] != probs_[b]) return probs_[a] > probs_[b];
                                  return a < b;
                              });
            group_.member_ids.assign(group_ws_.order.begin(),
                                     group_ws_.order.begin() + static_cast<std::ptrdiff_t>(size));
        }
        grouping::GroupProbAccumulator acc;
        for (std::size_t id : group_.member_ids) acc.add(probs_[id]);
        group_.predicted_collision_prob = acc.collision();
    }

    /// Unicast sweep over the whole group in id order. Members keep
    /// listening until their own poll has passed.
    void resolve_linear(const grouping::PollingGroup& group, const std::vector<std::size_t>& frozen_count,
                        bool stats) {
        std::vector<std::size_t> order(group.member_ids.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            return group.member_ids[a] < group.member_ids[b];
        });

        std::size_t position = 0;
        for (std::size_t pos : order) {
            const std::size_t id = group.member_ids[pos];
            const double t = clock_;
            ++position;
            if (stats) {
                // heard every sweep wake-up up to and including its own
                out_.per_node[id].wakeups_heard += position;
                ++out_.resolution_polls;
            }
            const std::size_t k = frozen_count[pos];
            if (k > 0) {
                if (stats) {
                    ++out_.slots.success;
                    out_.resolution_rounds_single[1] += 1;
                }
                deliver_front(id, k, t, t + params_.idle_slot() + params_.t_p, stats);
            } else if (stats) {
                ++out_.slots.idle;
            }
            clock_ = t + params_.idle_slot() + static_cast<double>(k) * params_.t_p;
            if (!draining_) ++out_.events_executed;
        }
        if (stats) out_.resolution_rounds_all[1] += 1;
    }

    /// Recursive probability-balanced splitting; every sub-poll is one
    /// multicast wake-up addressed to its subgroup.
    void resolve_binary(const grouping::PollingGroup& group,
                        const std::vector<std::size_t>& frozen_count, bool stats) {
        std::vector<double> probs(group.member_ids.size());
        std::vector<char> active(group.member_ids.size(), 0);
        for (std::size_t pos = 0; pos < group.member_ids.size(); ++pos) {
            probs[pos] = probs_[group.member_ids[pos]];
            active[pos] = frozen_count[pos] > 0 ? 1 : 0;
        }
        const auto plan = binary_resolution_plan(probs, active);

        for (const auto& poll : plan.polls) {
            const double t = clock_;
            if (stats) {
                ++out_.resolution_polls;
                for (std::size_t pos : poll.members)
                    out_.per_node[group.member_ids[pos]].wakeups_heard += 1;
            }

            if (poll.actives.empty()) {
                if (stats) ++out_.slots.idle;
                clock_ = t + params_.idle_slot();
            } else if (poll.actives.size() == 1) {
                const std::size_t pos = poll.actives[0];
                const std::size_t id = group.member_ids[pos];
                if (stats) {
                    ++out_.slots.success;
                    out_.resolution_rounds_single[std::min<std::size_t>(poll.depth, 63)] += 1;
                }
                deliver_front(id, frozen_count[pos], t, t + params_.idle_slot() + params_.t_p, stats);
                clock_ = t + params_.idle_slot() + static_cast<double>(frozen_count[pos]) * params_.t_p;
            } else {
                std::size_t kmax = 0;
                for (std::size_t pos : poll.actives) {
                    kmax = std::max(kmax, frozen_count[pos]);
                    if (stats) out_.per_node[group.member_ids[pos]].tx_packets += frozen_count[pos];
                }
                if (stats) ++out_.slots.collision;
                clock_ = t + params_.idle_slot() + static_cast<double>(kmax) * params_.t_p;
            }
            if (!draining_) ++out_.events_executed;
        }
        if (stats) out_.resolution_rounds_all[std::min<std::size_t>(plan.max_depth, 63)] += 1;
    }

    // ------------------------------------------------------------------
    // Slotted ALOHA with uniform backoff
    void init_aloha() {
        while (!arrival_heap_.empty()) arrival_heap_.pop();
        for (std::size_t i = 0; i < nodes_.size(); ++i)
            if (nodes_[i].next_arrival < std::numeric_limits<double>::infinity())
                arrival_heap_.push({nodes_[i].next_arrival, i});
        aloha_slot_ = 0;
    }

    void step_aloha() {
        const double slot_start = static_cast<double>(aloha_slot_) * params_.t_p;
        const double slot_end = slot_start + params_.t_p;
        const bool stats = in_stats(slot_start);

        // arrivals up to this boundary wake their nodes up
        while (!arrival_heap_.empty() && arrival_heap_.top().first <= slot_start) {
            const auto [when, id] = arrival_heap_.top();
            arrival_heap_.pop();
            auto& n = nodes_[id];
            n.queue.push_back(Packet{id, when, -1.0});
            ++out_.generated;
            n.next_arrival = when + next_gap(id);
            if (n.next_arrival < std::numeric_limits<double>::infinity())
                arrival_heap_.push({n.next_arrival, id});
            if (n.scheduled_slot < 0) {
                n.scheduled_slot = aloha_slot_;
                tx_schedule_[aloha_slot_].push_back(id);
            }
        }

        std::vector<std::size_t> txers;
        if (auto it = tx_schedule_.find(aloha_slot_); it != tx_schedule_.end()) {
            txers = std::move(it->second);
            tx_schedule_.erase(it);
        }

        if (txers.empty()) {
            if (stats) {
                ++out_.slots.idle;
                ++out_.top_slots.idle;
            }
        } else if (txers.size() == 1) {
            const std::size_t id = txers[0];
            auto& n = nodes_[id];
            if (stats) {
                ++out_.slots.success;
                ++out_.top_slots.success;
            }
            deliver_front(id, 1, slot_start, slot_end, stats);
            n.scheduled_slot = -1;
            if (!n.queue.empty()) {
                n.scheduled_slot = aloha_slot_ + 1;
                tx_schedule_[aloha_slot_ + 1].push_back(id);
            }
        } else {
            if (stats) {
                ++out_.slots.collision;
                ++out_.top_slots.collision;
            }
            for (std::size_t id : txers) {
                auto& n = nodes_[id];
                if (stats) out_.per_node[id].tx_packets += 1;
                const auto backoff =
                    rng_.uniform_int(1, static_cast<std::int64_t>(proto_.backoff_window));
                n.scheduled_slot = aloha_slot_ + backoff;
                tx_schedule_[n.scheduled_slot].push_back(id);
            }
        }

        ++aloha_slot_;
        clock_ = slot_end;
        if (!draining_) ++out_.events_executed;
    }

    // ------------------------------------------------------------------
    void check_stability() {
        const std::uint64_t backlog = out_.generated - out_.delivered_total;
        if (backlog > 100 * nodes_.size()) {
            out_.unstable = true;
            return;
        }
        if (tdma_reference_delay_ > 0.0 && out_.delays.size() >= 100) {
            for (std::size_t i = delay_running_count_; i < out_.delays.size(); ++i)
                delay_running_sum_ += out_.delays[i];
            delay_running_count_ = out_.delays.size();
            const double mean = delay_running_sum_ / static_cast<double>(delay_running_count_);
            if (mean > 10.0 * tdma_reference_delay_) out_.unstable = true;
        }
    }

    void finalize() {
        out_.sim_duration = draining_ ? stats_end_ : clock_;
        if (!draining_) out_.delivered_in_budget = out_.delivered_total;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            out_.residual_backlog += nodes_[i].queue.size();
            auto& pn = out_.per_node[i];
            pn.energy_useful = static_cast<double>(pn.delivered) * params_.e_tx;
            pn.energy_total = static_cast<double>(pn.wakeups_heard) * params_.e_wu +
                              static_cast<double>(pn.tx_packets) * params_.e_tx;
            out_.node_mean_gap[i] = out_.node_gap_count[i] > 0
                                        ? gap_sum_[i] / static_cast<double>(out_.node_gap_count[i])
                                        : 0.0;
        }
        auto trim = [](std::vector<std::uint64_t>& v) {
            while (!v.empty() && v.back() == 0) v.pop_back();
        };
        trim(out_.resolution_rounds_all);
        trim(out_.resolution_rounds_single);
    }

    NetworkParams params_;
    ProtocolConfig proto_;
    Rng rng_;
    std::vector<Node> nodes_;
    // per-slot scratch, reused across polls
    std::vector<double> probs_;
    std::vector<std::size_t> frozen_count_;
    std::vector<std::size_t> active_positions_;
    grouping::PollingGroup group_;
    grouping::GroupBuildWorkspace group_ws_;
    double clock_ = 0.0;
    double warmup_end_ = 0.0;
    bool draining_ = false;
    double stats_end_ = std::numeric_limits<double>::infinity();
    double tdma_reference_delay_ = -1.0;
    SimOutcome out_;
    std::vector<double> gap_sum_;
    double delay_running_sum_ = 0.0;
    std::size_t delay_running_count_ = 0;

    // TDMA
    std::size_t rr_index_ = 0;
    double cycle_start_ = 0.0;

    // ALOHA
    std::int64_t aloha_slot_ = 0;
    std::priority_queue<std::pair<double, std::size_t>, std::vector<std::pair<double, std::size_t>>,
                        std::greater<>>
        arrival_heap_;
    std::map<std::int64_t, std::vector<std::size_t>> tx_schedule_;
};

/// Runs one simulation to completion. Identical arguments produce an
/// identical SimOutcome.
inline SimOutcome simulate(const NetworkParams& params, const NodeRates& rates,
                           const ProtocolConfig& proto, const Horizon& horizon, std::uint64_t seed) {
    Simulator s(params, rates, proto, seed);
    return s.run(horizon);
}

}  // namespace wursim::sim
