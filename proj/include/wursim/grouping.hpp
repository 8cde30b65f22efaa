#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <unordered_set>
#include <utility>
#include <vector>

namespace wursim::grouping {

/// One candidate for multicast polling: the node and its probability of
/// having at least one packet pending, 1 - exp(-lambda_n * tau_n).
struct Candidate {
    std::size_t node_id = 0;
    double activation_prob = 0.0;
};

struct CandidatePool {
    std::vector<Candidate> entries;

    void validate() const {
        std::unordered_set<std::size_t> ids;
        for (const auto& c : entries) {
            if (!(c.activation_prob >= 0.0) || c.activation_prob > 1.0)
                throw std::domain_error("CandidatePool: activation_prob outside [0,1]");
            if (!ids.insert(c.node_id).second)
                throw std::domain_error("CandidatePool: node ids must be distinct");
        }
    }
};

/// Running idle/success/collision probabilities of a group under
/// independent activations, updatable in O(1) per added member.
class GroupProbAccumulator {
public:
    void add(double p) {
        if (p >= 1.0) {
            ++saturated_;
        } else {
            q_prod_ *= 1.0 - p;
            odds_sum_ += p / (1.0 - p);
        }
        ++count_;
    }

    std::size_t size() const { return count_; }

    double idle() const { return saturated_ > 0 ? 0.0 : q_prod_; }

    double success() const {
        if (saturated_ >= 2) return 0.0;
        if (saturated_ == 1) return q_prod_;
        return q_prod_ * odds_sum_;
    }

    double collision() const {
        if (count_ < 2) return 0.0;
        return std::clamp(1.0 - idle() - success(), 0.0, 1.0);
    }

    /// Collision probability of the group with one extra member, without
    /// committing the addition.
    double collision_with(double p) const {
        GroupProbAccumulator tmp = *this;
        tmp.add(p);
        return tmp.collision();
    }

private:
    double q_prod_ = 1.0;   // product of (1 - p) over non-saturated members
    double odds_sum_ = 0.0; // sum of p / (1 - p) over non-saturated members
    std::size_t saturated_ = 0;
    std::size_t count_ = 0;
};

/// A committed multicast polling group.
struct PollingGroup {
    std::vector<std::size_t> member_ids;   ///< insertion order
    double predicted_collision_prob = 0.0; ///< group collision probability at build time
    double threshold_used = 1.0;           ///< p_thr in force when built (1 for fixed groups)
};

/// Builds a polling group around the most likely active node, then grows
/// it with the least likely nodes while the predicted collision
/// probability stays within p_thr. Deterministic: ties break on lower id.
inline PollingGroup build_group(const CandidatePool& pool, double p_thr) {
    pool.validate();
    if (pool.entries.empty()) throw std::domain_error("build_group: empty candidate pool");
    if (!(p_thr > 0.0) || !(p_thr < 1.0)) throw std::domain_error("build_group: p_thr outside (0,1)");

    // seed: highest activation probability, ties to the lower id
    std::size_t seed_idx = 0;
    for (std::size_t i = 1; i < pool.entries.size(); ++i) {
        const auto& c = pool.entries[i];
        const auto& s = pool.entries[seed_idx];
        if (c.activation_prob > s.activation_prob ||
            (c.activation_prob == s.activation_prob && c.node_id < s.node_id))
            seed_idx = i;
    }

    // remaining candidates ascending by probability, ties to the lower id
    std::vector<std::size_t> order;
    order.reserve(pool.entries.size() - 1);
    for (std::size_t i = 0; i < pool.entries.size(); ++i)
        if (i != seed_idx) order.push_back(i);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const auto& ca = pool.entries[a];
        const auto& cb = pool.entries[b];
        if (ca.activation_prob != cb.activation_prob) return ca.activation_prob < cb.activation_prob;
        return ca.node_id < cb.node_id;
    });

    PollingGroup g;
    g.threshold_used = p_thr;
    GroupProbAccumulator acc;
    g.member_ids.push_back(pool.entries[seed_idx].node_id);
    acc.add(pool.entries[seed_idx].activation_prob);

    for (std::size_t idx : order) {
        const auto& cand = pool.entries[idx];
        if (acc.collision_with(cand.activation_prob) > p_thr) break;
        acc.add(cand.activation_prob);
        g.member_ids.push_back(cand.node_id);
    }
    g.predicted_collision_prob = acc.collision();
    return g;
}

struct GroupBuildWorkspace {
    std::vector<std::size_t> order;
};

/// Same construction as build_group for a pool whose node i carries
/// activation probability probs[i], without validation and without
/// allocating: the simulator's per-slot path. The candidate ordering is
/// materialized lazily -- groups cut short by the threshold only ever
/// need their smallest candidates sorted, and the all-in test bails out
/// as soon as the running collision probability passes p_thr (it can
/// only grow from there).
inline void build_group_into(const std::vector<double>& probs, double p_thr,
                             GroupBuildWorkspace& ws, PollingGroup& out) {
    const std::size_t n = probs.size();
    out.member_ids.clear();
    out.threshold_used = p_thr;

    std::size_t seed = 0;
    for (std::size_t i = 1; i < n; ++i)
        if (probs[i] > probs[seed]) seed = i;  // equal probs keep the lower id

    bool all_in = true;
    GroupProbAccumulator all;
    for (std::size_t i = 0; i < n; ++i) {
        all.add(probs[i]);
        if ((i & 31u) == 31u && all.collision() > p_thr) {
            all_in = false;
            break;
        }
    }
    if (all_in && all.collision() <= p_thr) {
        out.member_ids.reserve(n);
        out.member_ids.push_back(seed);
        for (std::size_t i = 0; i < n; ++i)
            if (i != seed) out.member_ids.push_back(i);
        out.predicted_collision_prob = all.collision();
        return;
    }

    ws.order.clear();
    ws.order.reserve(n - 1);
    for (std::size_t i = 0; i < n; ++i)
        if (i != seed) ws.order.push_back(i);
    auto ascending = [&probs](std::size_t a, std::size_t b) {
        if (probs[a] != probs[b]) return probs[a] < probs[b];
        return a < b;
    };
    const std::size_t total = ws.order.size();
    std::size_t sorted_upto = std::min<std::size_t>(total, 64);
    std::partial_sort(ws.order.begin(), ws.order.begin() + static_cast<std::ptrdiff_t>(sorted_upto),
                      ws.order.end(), ascending);

    GroupProbAccumulator acc;
    out.member_ids.push_back(seed);
    acc.add(probs[seed]);
    for (std::size_t i = 0; i < total; ++i) {
        if (i == sorted_upto) {
            // everything before sorted_upto is consumed; order the next
            // chunk of smallest remaining candidates
            const std::size_t next = std::min(total, sorted_upto * 4);
            const auto begin = ws.order.begin() + static_cast<std::ptrdiff_t>(sorted_upto);
            const auto mid = ws.order.begin() + static_cast<std::ptrdiff_t>(next);
            std::nth_element(begin, mid - 1, ws.order.end(), ascending);
            std::sort(begin, mid, ascending);
            sorted_upto = next;
        }
        const std::size_t cand = ws.order[i];
        if (acc.collision_with(probs[cand]) > p_thr) break;
        acc.add(probs[cand]);
        out.member_ids.push_back(cand);
    }
    out.predicted_collision_prob = acc.collision();
}

/// The `size` most likely active nodes, ties broken by lower id.
inline PollingGroup build_fixed_group(const CandidatePool& pool, std::size_t size) {
    pool.validate();
    if (size < 1 || size > pool.entries.size())
        throw std::domain_error("build_fixed_group: size outside [1, pool size]");

    std::vector<std::size_t> order(pool.entries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(size), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          const auto& ca = pool.entries[a];
                          const auto& cb = pool.entries[b];
                          if (ca.activation_prob != cb.activation_prob)
                              return ca.activation_prob > cb.activation_prob;
                          return ca.node_id < cb.node_id;
                      });

    PollingGroup g;
    GroupProbAccumulator acc;
    for (std::size_t i = 0; i < size; ++i) {
        const auto& c = pool.entries[order[i]];
        g.member_ids.push_back(c.node_id);
        acc.add(c.activation_prob);
    }
    g.predicted_collision_prob = acc.collision();
    return g;
}

/// Splits a collided group into two non-empty halves of similar aggregate
/// activation probability: members sorted by descending probability, each
/// assigned to the currently lighter side.
inline std::pair<PollingGroup, PollingGroup> split_group(const PollingGroup& group,
                                                         const CandidatePool& pool) {
    if (group.member_ids.size() < 2) throw std::domain_error("split_group: group must have >= 2 members");
    pool.validate();

    struct Item {
        std::size_t node_id;
        double prob;
    };
    std::vector<Item> items;
    items.reserve(group.member_ids.size());
    for (std::size_t id : group.member_ids) {
        auto it = std::find_if(pool.entries.begin(), pool.entries.end(),
                               [id](const Candidate& c) { return c.node_id == id; });
        if (it == pool.entries.end())
            throw std::domain_error("split_group: group member missing from pool");
        items.push_back({id, it->activation_prob});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        if (a.prob != b.prob) return a.prob > b.prob;
        return a.node_id < b.node_id;
    });

    PollingGroup left;
    PollingGroup right;
    left.threshold_used = group.threshold_used;
    right.threshold_used = group.threshold_used;
    GroupProbAccumulator lacc;
    GroupProbAccumulator racc;
    double lsum = 0.0;
    double rsum = 0.0;
    for (const auto& it : items) {
        // lighter side wins; equal weight falls back to cardinality balance
        const bool to_left = lsum < rsum || (lsum == rsum && left.member_ids.size() <= right.member_ids.size());
        if (to_left) {
            left.member_ids.push_back(it.node_id);
            lacc.add(it.prob);
            lsum += it.prob;
        } else {
            right.member_ids.push_back(it.node_id);
            racc.add(it.prob);
            rsum += it.prob;
        }
    }
    left.predicted_collision_prob = lacc.collision();
    right.predicted_collision_prob = racc.collision();
    return {std::move(left), std::move(right)};
}

}  // namespace wursim::grouping
