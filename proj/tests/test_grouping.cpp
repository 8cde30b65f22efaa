#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "wursim/analytic.hpp"
#include "wursim/grouping.hpp"

using namespace wursim;
using namespace wursim::grouping;

namespace {

CandidatePool make_pool(const std::vector<double>& probs) {
    CandidatePool pool;
    for (std::size_t i = 0; i < probs.size(); ++i) pool.entries.push_back({i, probs[i]});
    return pool;
}

// Collision probability of a set of activation probabilities via the
// enumeration oracle (lambda*tau recovered from p).
double oracle_collision(const std::vector<double>& probs) {
    std::vector<double> lt;
    lt.reserve(probs.size());
    for (double p : probs) lt.push_back(-std::log1p(-p));
    return oracles::enumerate_group(lt).collision;
}

}  // namespace

TEST_CASE("build_group") {
    SECTION("singleton pool") {
        auto g = build_group(make_pool({0.4}), 0.05);
        REQUIRE(g.member_ids == std::vector<std::size_t>{0});
        CHECK(g.predicted_collision_prob == 0.0);
        CHECK(g.threshold_used == 0.05);
    }

    SECTION("seed plus low-probability companions, violator excluded") {
        // ids: 0 -> 0.9, 1 -> 0.001, 2 -> 0.002, 3 -> 0.5
        auto pool = make_pool({0.9, 0.001, 0.002, 0.5});
        auto g = build_group(pool, 0.05);
        REQUIRE(g.member_ids == std::vector<std::size_t>{0, 1, 2});
        // adding node 3 would push the collision probability past the threshold
        CHECK(oracle_collision({0.9, 0.001, 0.002}) <= 0.05);
        CHECK(oracle_collision({0.9, 0.001, 0.002, 0.5}) > 0.05);
        CHECK(g.predicted_collision_prob ==
              Catch::Approx(oracle_collision({0.9, 0.001, 0.002})).margin(1e-12));
    }

    SECTION("zero-rate companions all join") {
        auto pool = make_pool({0.0, 0.0, 0.7, 0.0, 0.0});
        auto g = build_group(pool, 0.01);
        REQUIRE(g.member_ids.size() == 5);
        CHECK(g.member_ids.front() == 2);  // seed first
        CHECK(g.predicted_collision_prob == 0.0);
    }

    SECTION("empty pool and bad threshold rejected") {
        CHECK_THROWS_AS(build_group(CandidatePool{}, 0.05), std::domain_error);
        CHECK_THROWS_AS(build_group(make_pool({0.1}), 0.0), std::domain_error);
        CHECK_THROWS_AS(build_group(make_pool({0.1}), 1.0), std::domain_error);
    }

    SECTION("prediction matches the enumeration oracle on random pools") {
        std::mt19937_64 gen(21);
        std::uniform_real_distribution<double> pd(0.0, 0.6);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<double> probs(2 + gen() % 10);
            for (auto& p : probs) p = pd(gen);
            auto g = build_group(make_pool(probs), 0.08);
            std::vector<double> member_probs;
            for (std::size_t id : g.member_ids) member_probs.push_back(probs[id]);
            REQUIRE(g.predicted_collision_prob ==
                    Catch::Approx(oracle_collision(member_probs)).margin(1e-12));
            // contract: within threshold, or a singleton, or everyone
            REQUIRE((g.predicted_collision_prob <= 0.08 || g.member_ids.size() == 1 ||
                     g.member_ids.size() == probs.size()));
            // no duplicates
            std::vector<std::size_t> ids = g.member_ids;
            std::sort(ids.begin(), ids.end());
            REQUIRE(std::adjacent_find(ids.begin(), ids.end()) == ids.end());
        }
    }

    SECTION("deterministic") {
        auto pool = make_pool({0.2, 0.1, 0.1, 0.05, 0.3});
        auto a = build_group(pool, 0.07);
        auto b = build_group(pool, 0.07);
        REQUIRE(a.member_ids == b.member_ids);
        REQUIRE(a.predicted_collision_prob == b.predicted_collision_prob);
    }
}

TEST_CASE("build_fixed_group") {
    auto pool = make_pool({0.3, 0.3, 0.1});

    SECTION("take-all and argmax") {
        CHECK(build_fixed_group(pool, 3).member_ids.size() == 3);
        auto top = build_fixed_group(pool, 1);
        REQUIRE(top.member_ids == std::vector<std::size_t>{0});  // tie on 0.3 -> lower id
    }
    SECTION("top two with id tie-break") {
        auto g = build_fixed_group(pool, 2);
        REQUIRE(g.member_ids == std::vector<std::size_t>{0, 1});
    }
    SECTION("size out of range") {
        CHECK_THROWS_AS(build_fixed_group(pool, 0), std::domain_error);
        CHECK_THROWS_AS(build_fixed_group(pool, 4), std::domain_error);
    }
}

TEST_CASE("split_group") {
    SECTION("two equal members split one each side") {
        auto pool = make_pool({0.4, 0.4});
        auto g = build_fixed_group(pool, 2);
        auto [l, r] = split_group(g, pool);
        REQUIRE(l.member_ids.size() == 1);
        REQUIRE(r.member_ids.size() == 1);
    }
    SECTION("documented greedy assignment") {
        auto pool = make_pool({0.5, 0.3, 0.2});
        auto g = build_fixed_group(pool, 3);
        auto [l, r] = split_group(g, pool);
        REQUIRE(l.member_ids == std::vector<std::size_t>{0});
        REQUIRE(r.member_ids == std::vector<std::size_t>{1, 2});
    }
    SECTION("all-equal probabilities give equal halves") {
        auto pool = make_pool({0.2, 0.2, 0.2, 0.2, 0.2, 0.2});
        auto g = build_fixed_group(pool, 6);
        auto [l, r] = split_group(g, pool);
        CHECK(l.member_ids.size() == 3);
        CHECK(r.member_ids.size() == 3);
    }
    SECTION("all-zero probabilities still split by cardinality") {
        auto pool = make_pool({0.0, 0.0, 0.0, 0.0});
        PollingGroup g;
        g.member_ids = {0, 1, 2, 3};
        auto [l, r] = split_group(g, pool);
        CHECK(l.member_ids.size() == 2);
        CHECK(r.member_ids.size() == 2);
    }
    SECTION("singleton rejected") {
        auto pool = make_pool({0.4});
        PollingGroup g;
        g.member_ids = {0};
        CHECK_THROWS_AS(split_group(g, pool), std::domain_error);
    }
    SECTION("greedy imbalance never larger than the heaviest member") {
        std::mt19937_64 gen(99);
        std::uniform_real_distribution<double> pd(0.0, 1.0);
        for (int trial = 0; trial < 200; ++trial) {
            std::vector<double> probs(2 + gen() % 11);
            for (auto& p : probs) p = pd(gen);
            auto pool = make_pool(probs);
            auto g = build_fixed_group(pool, probs.size());
            auto [l, r] = split_group(g, pool);
            REQUIRE(l.member_ids.size() + r.member_ids.size() == probs.size());
            double lsum = 0.0;
            double rsum = 0.0;
            double pmax = 0.0;
            for (std::size_t id : l.member_ids) lsum += probs[id];
            for (std::size_t id : r.member_ids) rsum += probs[id];
            for (double p : probs) pmax = std::max(pmax, p);
            const double greedy = std::abs(lsum - rsum);
            REQUIRE(greedy <= pmax + 1e-12);
            REQUIRE(greedy + 1e-12 >= oracles::best_partition_imbalance(probs));
        }
    }
}

TEST_CASE("accumulator agrees with the snapshot formulas") {
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> pd(0.0, 0.95);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<double> probs(1 + gen() % 12);
        for (auto& p : probs) p = pd(gen);

        GroupProbAccumulator acc;
        analytic::GroupSnapshot snap;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc.add(probs[i]);
            snap.members.push_back({i, -std::log1p(-probs[i]), 1.0});
        }
        REQUIRE(acc.idle() == Catch::Approx(analytic::group_idle_prob(snap)).margin(1e-12));
        REQUIRE(acc.success() == Catch::Approx(analytic::group_success_prob(snap)).margin(1e-12));
        REQUIRE(acc.collision() == Catch::Approx(analytic::group_collision_prob(snap)).margin(1e-12));
    }
}

TEST_CASE("workspace builder matches the reference construction") {
    std::mt19937_64 gen(0xD00D);
    std::uniform_real_distribution<double> pd(0.0, 1.0);
    GroupBuildWorkspace ws;
    PollingGroup fast;
    for (int trial = 0; trial < 400; ++trial) {
        const std::size_t n = 1 + gen() % 200;
        std::vector<double> probs(n);
        CandidatePool pool;
        for (std::size_t i = 0; i < n; ++i) {
            // mix of cold, warm and saturated nodes
            const double roll = pd(gen);
            probs[i] = roll < 0.2 ? 0.0 : roll < 0.9 ? pd(gen) * 0.5 : 1.0 - pd(gen) * 1e-3;
            pool.entries.push_back({i, probs[i]});
        }
        const double thr = 0.01 + 0.3 * pd(gen);
        auto ref = build_group(pool, thr);
        build_group_into(probs, thr, ws, fast);

        REQUIRE(fast.member_ids.front() == ref.member_ids.front());  // same seed
        auto a = fast.member_ids;
        auto b = ref.member_ids;
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        REQUIRE(a == b);  // same membership
        REQUIRE(fast.predicted_collision_prob ==
                Catch::Approx(ref.predicted_collision_prob).margin(1e-12));
    }
}
