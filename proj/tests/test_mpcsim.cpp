/*
   Copyright 2026 The tfm-lab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <doctest.h>

#include <tfm/mpcsim/protocol.hpp>

using namespace tfm;
using namespace tfm::mpcsim;

namespace {

MechanismRule random_selection(double r = 1.0, std::size_t k = 2) {
    return make_posted_price(PostedPriceParams{r, true, k, Model::mpc});
}

ProtocolConfig config_for(std::size_t m, std::vector<double> bids, MechanismRule rule, std::uint64_t seed = 7) {
    ProtocolConfig cfg;
    cfg.miners = m;
    cfg.rule = std::move(rule);
    cfg.seed = seed;
    for (std::size_t i = 0; i < bids.size(); ++i) cfg.identities.push_back(IdentityConfig{"u" + std::to_string(i), bids[i]});
    return cfg;
}

// Chi-square statistic of counts against a uniform expectation.
double chi_square(const std::vector<int>& counts) {
    double total = 0;
    for (int c : counts) total += c;
    const double expected = total / static_cast<double>(counts.size());
    double chi = 0;
    for (int c : counts) chi += (c - expected) * (c - expected) / expected;
    return chi;
}

// 99.9% quantile of chi-square with 15 degrees of freedom.
constexpr double kChi15 = 37.70;

int bucket16(Fp v) { return static_cast<int>(v.value() >> 57U); }

void check_run(const ProtocolConfig& cfg) {
    const auto run = run_pi_mpc(cfg);
    const auto ideal = ideal_outcome(cfg);
    INFO(trace_to_json(cfg, run).dump());
    CHECK(ideal_diff(run.outcome, ideal).empty());
    for (const auto& h : run.honest_outputs) CHECK(h == run.outcome);
    // C members contribute zero bids.
    for (const auto& id : run.transcript.misbehaving) {
        const auto it = std::find(run.outcome.identities.begin(), run.outcome.identities.end(), id);
        REQUIRE(it != run.outcome.identities.end());
        if (!run.outcome.aborted) CHECK(run.outcome.bids[static_cast<std::size_t>(it - run.outcome.identities.begin())] == 0.0);
    }
}

const std::vector<IdentityScript> kFaultyIdentity{
    IdentityScript::withhold_commitment, IdentityScript::inconsistent_sharing, IdentityScript::withhold_share,
    IdentityScript::bad_opening,         IdentityScript::withhold_complaint_response, IdentityScript::equivocate,
    IdentityScript::copy_commitment,     IdentityScript::partial_announce,
};

const std::vector<MinerScript> kFaultyMiner{
    MinerScript::withhold_crs,           MinerScript::withhold_ok_complain,      MinerScript::false_complaint,
    MinerScript::abort_in_reconstruction, MinerScript::bad_reconstruction_input, MinerScript::suppress_identities,
};

}  // namespace

TEST_CASE("field arithmetic matches 128-bit reference") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::uint64_t a = rng() % Fp::kModulus;
        const std::uint64_t b = rng() % Fp::kModulus;
        const auto ref = static_cast<std::uint64_t>(static_cast<uint128>(a) * b % Fp::kModulus);
        CHECK((Fp(a) * Fp(b)).value() == ref);
        CHECK((Fp(a) + Fp(b)).value() == (a + b) % Fp::kModulus);
        CHECK((Fp(a) - Fp(b)).value() == (a + Fp::kModulus - b) % Fp::kModulus);
        if (a != 0) CHECK((Fp(a) * Fp(a).inverse()).value() == 1);
    }
    CHECK(Fp(Fp::kModulus).value() == 0);
}

TEST_CASE("shamir sharing reconstructs from any t shares") {
    const auto shares = shamir_share(Fp(5), 2, 3, 11);
    for (std::size_t a = 0; a < 3; ++a)
        for (std::size_t b = a + 1; b < 3; ++b) {
            const std::vector<Share> pair{shares[a], shares[b]};
            CHECK(shamir_reconstruct(pair, 2) == Fp(5));
        }
    CHECK(shamir_share(Fp(42), 1, 1, 3).front().value == Fp(42));
    CHECK_THROWS_AS(shamir_share(Fp(1), 4, 3, 0), InvalidParameters);
    CHECK_FALSE(shamir_reconstruct(std::span(shares).first(1), 2).has_value());
}

TEST_CASE("reconstruct of share is the identity for every large enough subset") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t m = 1 + rng() % 7;
        const std::size_t t = 1 + rng() % m;
        const Fp secret = Fp::random(rng);
        const auto shares = shamir_share(secret, t, m, rng);
        CHECK(is_consistent_sharing(shares, t));
        for (std::uint32_t mask = 1; mask < (1U << m); ++mask) {
            std::vector<Share> subset;
            for (std::size_t j = 0; j < m; ++j)
                if ((mask >> j) & 1U) subset.push_back(shares[j]);
            const auto got = shamir_reconstruct(subset, t);
            if (subset.size() >= t) CHECK(got == secret);
            else CHECK_FALSE(got.has_value());
        }
    }
}

TEST_CASE("one corrupted share among m yields a wrong secret") {
    auto shares = shamir_share(Fp(1234), 2, 4, 5);
    shares[2].value = shares[2].value + Fp(1);
    const auto got = shamir_reconstruct(shares, 2);
    REQUIRE(got.has_value());
    CHECK_FALSE(*got == Fp(1234));
    CHECK_FALSE(is_consistent_sharing(shares, 2));
}

TEST_CASE("a single share is uniform regardless of the secret") {
    std::vector<int> lo(16, 0);
    std::vector<int> hi(16, 0);
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
        ++lo[static_cast<std::size_t>(bucket16(shamir_share(Fp(0), 2, 3, seed)[0].value))];
        ++hi[static_cast<std::size_t>(bucket16(shamir_share(Fp(999999), 2, 3, seed + 1000000)[0].value))];
    }
    CHECK(chi_square(lo) < kChi15);
    CHECK(chi_square(hi) < kChi15);
}

TEST_CASE("additive sharing needs every share") {
    std::mt19937_64 rng(9);
    const auto shares = additive_share(Fp(77), 4, rng);
    CHECK(additive_reconstruct(shares) == Fp(77));
    CHECK_FALSE(additive_reconstruct(std::span(shares).first(3)) == Fp(77));
}

TEST_CASE("amount encoding round-trips at the scale") {
    CHECK(decode_amount(encode_amount(3.25, 1e6), 1e6) == 3.25);
    CHECK(decode_amount(encode_amount(0.1234567, 1e6), 1e6) == doctest::Approx(0.123457).epsilon(1e-12));
    CHECK_THROWS_AS(encode_amount(-1.0, 1e6), InvalidParameters);
}

TEST_CASE("commitments bind to a single opening") {
    CommitmentScheme scheme;
    const Opening o{Fp(10), 99};
    const auto c = scheme.commit(o);
    CHECK(scheme.verify(c, o));
    CHECK_FALSE(scheme.verify(c, Opening{Fp(11), 99}));
    CHECK_FALSE(scheme.verify(c, Opening{Fp(10), 98}));
    CHECK_FALSE(scheme.verify(Commitment{c.digest ^ 1U}, o));
    CHECK(scheme.commit(o) == c);
    CHECK(c.hex().size() == 16);
}

TEST_CASE("identity agreement keeps strict majorities") {
    CHECK(identity_agreement({{"a"}, {"a"}, {}}, 3) == std::vector<std::string>{"a"});
    CHECK(identity_agreement({{}, {}, {"a"}}, 3).empty());
    CHECK(identity_agreement({{"a"}, {"a"}, {}, {}}, 4).empty());
    // Honest identity announced everywhere survives floor((m-1)/2) suppressors.
    for (std::size_t m = 1; m <= 9; ++m) {
        std::vector<std::vector<std::string>> reports(m, std::vector<std::string>{"h"});
        for (std::size_t j = 0; j < (m - 1) / 2; ++j) reports[j].clear();
        CHECK(identity_agreement(reports, m) == std::vector<std::string>{"h"});
    }
}

TEST_CASE("honest run at m=4 equals the ideal functionality") {
    const auto cfg = config_for(4, {3.5, 1.25, 0.5, 2.0}, random_selection());
    CHECK(cfg.threshold() == 2);
    const auto run = run_pi_mpc(cfg);
    CHECK(run.transcript.misbehaving.empty());
    CHECK(run.honest_outputs.size() == 4);
    CHECK(run.outcome == ideal_outcome(cfg));
    CHECK(run.outcome.bids == std::vector<double>{3.5, 1.25, 0.5, 2.0});
    CHECK(run.outcome.realized.confirmed_count() == 2);
}

TEST_CASE("silent miner does not prevent reconstruction") {
    auto cfg = config_for(4, {3.5, 1.25, 0.5}, random_selection());
    cfg.miner_scripts = {MinerScript::honest, MinerScript::withhold_ok_complain, MinerScript::honest, MinerScript::honest};
    const auto run = run_pi_mpc(cfg);
    CHECK(ideal_diff(run.outcome, ideal_outcome(cfg)).empty());
    CHECK(run.outcome.bids == std::vector<double>{3.5, 1.25, 0.5});
    CHECK(run.honest_outputs.size() == 3);
}

TEST_CASE("ignored complaint puts the identity in C with bid zero") {
    auto cfg = config_for(4, {3.5, 1.25, 2.0}, random_selection());
    cfg.identities[1].script = IdentityScript::withhold_complaint_response;
    cfg.identities[1].target_miner = 2;
    const auto run = run_pi_mpc(cfg);
    CHECK(run.transcript.misbehaving == std::vector<std::string>{"u1"});
    CHECK(run.outcome.bids == std::vector<double>{3.5, 0.0, 2.0});
    CHECK(ideal_diff(run.outcome, ideal_outcome(cfg)).empty());
}

TEST_CASE("answered complaint keeps the identity out of C") {
    auto cfg = config_for(3, {3.5, 1.25}, random_selection());
    cfg.identities[0].script = IdentityScript::withhold_share;
    cfg.identities[0].target_miner = 1;
    const auto run = run_pi_mpc(cfg);
    CHECK(run.transcript.misbehaving.empty());
    CHECK(run.outcome.bids == std::vector<double>{3.5, 1.25});
    const auto disputes = std::count_if(run.transcript.messages.begin(), run.transcript.messages.end(),
                                        [](const Message& msg) { return msg.kind == "dispute"; });
    CHECK(disputes == 1);
}

TEST_CASE("guaranteed mode rejects corrupt majority") {
    auto cfg = config_for(4, {1.0}, random_selection());
    cfg.miner_scripts = {MinerScript::withhold_crs, MinerScript::false_complaint, MinerScript::honest, MinerScript::honest};
    CHECK_THROWS_AS(run_pi_mpc(cfg), InvalidParameters);
    CHECK_NOTHROW(run_pi_mpc_abort_mode(cfg));
}

TEST_CASE("ideal-real equivalence over every single fault") {
    const std::vector<MechanismRule> rules{
        random_selection(1.0, 2),
        make_proportional(ProportionalParams{4.0, 1.0, 1.0, Model::mpc}),
        make_posted_price(PostedPriceParams{1.5, false, std::nullopt, Model::mpc}),
    };
    std::size_t runs = 0;
    for (const auto& rule : rules)
        for (std::size_t m = 3; m <= 5; ++m)
            for (std::size_t n = 1; n <= 6; ++n) {
                std::vector<double> bids;
                for (std::size_t i = 0; i < n; ++i) bids.push_back(0.75 + 0.9 * static_cast<double>(i));
                const auto base = config_for(m, bids, rule, 100 * m + n);
                check_run(base);
                ++runs;
                for (const auto script : kFaultyIdentity)
                    for (const std::size_t who : {std::size_t{0}, n - 1})
                        for (std::size_t target = 0; target < m; ++target) {
                            auto cfg = base;
                            cfg.identities[who].script = script;
                            cfg.identities[who].target_miner = target;
                            check_run(cfg);
                            ++runs;
                        }
                for (const auto script : kFaultyMiner)
                    for (std::size_t j = 0; j < m; ++j) {
                        auto cfg = base;
                        cfg.miner_scripts.assign(m, MinerScript::honest);
                        cfg.miner_scripts[j] = script;
                        check_run(cfg);
                        ++runs;
                    }
            }
    CHECK(runs > 2000);
}

TEST_CASE("misbehaving scripts land in C exactly when they zero the bid") {
    for (const auto script : kFaultyIdentity) {
        auto cfg = config_for(5, {2.0, 3.0, 4.0}, random_selection());
        cfg.identities[1].script = script;
        cfg.identities[1].target_miner = 3;
        const auto run = run_pi_mpc(cfg);
        const bool in_c = std::find(run.transcript.misbehaving.begin(), run.transcript.misbehaving.end(), "u1") !=
                          run.transcript.misbehaving.end();
        const bool zeroed = script == IdentityScript::withhold_commitment || script == IdentityScript::inconsistent_sharing ||
                            script == IdentityScript::bad_opening ||
                            script == IdentityScript::withhold_complaint_response ||
                            script == IdentityScript::copy_commitment;
        INFO(to_string(script));
        CHECK(in_c == zeroed);
        if (script == IdentityScript::partial_announce)
            CHECK(run.outcome.identities == std::vector<std::string>{"u0", "u2"});
    }
}

TEST_CASE("honest miners agree across randomized runs") {
    std::mt19937_64 rng(2026);
    std::uniform_real_distribution<double> bid(0.0, 10.0);
    const auto rule = random_selection(2.0, 2);
    int agreed = 0;
    constexpr int kRuns = 10000;
    for (int r = 0; r < kRuns; ++r) {
        const std::size_t m = 3 + rng() % 3;
        const std::size_t n = 1 + rng() % 6;
        std::vector<double> bids(n);
        for (auto& b : bids) b = std::round(bid(rng) * 1e6) / 1e6;
        auto cfg = config_for(m, bids, rule, rng());
        switch (rng() % 3) {
            case 0: break;
            case 1: {
                auto& who = cfg.identities[rng() % n];
                who.script = kFaultyIdentity[rng() % kFaultyIdentity.size()];
                who.target_miner = rng() % m;
                break;
            }
            default:
                cfg.miner_scripts.assign(m, MinerScript::honest);
                cfg.miner_scripts[rng() % m] = kFaultyMiner[rng() % kFaultyMiner.size()];
        }
        const auto run = run_pi_mpc(cfg);
        const bool all_same = std::all_of(run.honest_outputs.begin(), run.honest_outputs.end(),
                                          [&](const ProtocolOutcome& o) { return o == run.outcome; });
        if (all_same && !run.honest_outputs.empty() && ideal_diff(run.outcome, ideal_outcome(cfg)).empty()) ++agreed;
    }
    CHECK(agreed == kRuns);
}

TEST_CASE("abort mode") {
    const auto base = config_for(4, {3.0, 1.5, 2.5}, random_selection());
    SUBCASE("all honest equals ideal") {
        const auto run = run_pi_mpc_abort_mode(base);
        CHECK_FALSE(run.outcome.aborted);
        auto ideal_cfg = base;
        ideal_cfg.mode = Mode::abort;
        CHECK(run.outcome == ideal_outcome(ideal_cfg));
        CHECK(run.outcome.bids == std::vector<double>{3.0, 1.5, 2.5});
    }
    SUBCASE("aborts exactly when a reconstruction opening is withheld") {
        for (std::size_t m = 2; m <= 5; ++m)
            for (const auto script : kFaultyMiner)
                for (std::size_t corrupt = 1; corrupt <= m; ++corrupt) {
                    auto cfg = base;
                    cfg.miners = m;
                    cfg.miner_scripts.assign(m, MinerScript::honest);
                    for (std::size_t j = 0; j < corrupt; ++j) cfg.miner_scripts[j] = script;
                    const auto run = run_pi_mpc_abort_mode(cfg);
                    const bool withheld = script == MinerScript::abort_in_reconstruction ||
                                          script == MinerScript::bad_reconstruction_input;
                    INFO(std::string(to_string(script)), " m=", m, " corrupt=", corrupt);
                    CHECK(run.outcome.aborted == withheld);
                    if (run.outcome.aborted) CHECK(run.outcome.bids.empty());
                    cfg.mode = Mode::abort;
                    CHECK(ideal_diff(run.outcome, ideal_outcome(cfg)).dump() == "[]");
                }
    }
    SUBCASE("ignored complaint kicks the identity out and the run completes") {
        auto cfg = base;
        cfg.identities[2].script = IdentityScript::withhold_complaint_response;
        cfg.identities[2].target_miner = 0;
        const auto run = run_pi_mpc_abort_mode(cfg);
        CHECK_FALSE(run.outcome.aborted);
        CHECK(run.transcript.misbehaving == std::vector<std::string>{"u2"});
        CHECK(run.outcome.bids == std::vector<double>{3.0, 1.5, 0.0});
    }
    SUBCASE("copied commitments cannot be opened") {
        auto cfg = base;
        cfg.identities[1].script = IdentityScript::copy_commitment;
        const auto run = run_pi_mpc_abort_mode(cfg);
        CHECK_FALSE(run.outcome.aborted);
        CHECK(run.transcript.misbehaving == std::vector<std::string>{"u1"});
    }
}

TEST_CASE("rushing scripts cannot alter honest commitments") {
    const auto honest_cfg = config_for(5, {3.0, 1.5, 2.5}, random_selection());
    auto copy_cfg = honest_cfg;
    copy_cfg.identities.push_back(IdentityConfig{"z", 9.0, IdentityScript::copy_commitment, 0});
    const auto honest = run_pi_mpc(honest_cfg);
    const auto attacked = run_pi_mpc(copy_cfg);
    auto commitments_of = [](const ProtocolRun& run, const std::string& id) {
        for (const auto& msg : run.transcript.messages)
            if (msg.kind == "commitments" && msg.sender == id) return msg.payload;
        return nlohmann::json();
    };
    for (const std::string id : {"u0", "u1", "u2"}) CHECK(commitments_of(honest, id) == commitments_of(attacked, id));
    // The copy arrives after every honest commitment.
    std::size_t last_honest = 0;
    std::size_t copy_at = 0;
    for (std::size_t i = 0; i < attacked.transcript.messages.size(); ++i) {
        const auto& msg = attacked.transcript.messages[i];
        if (msg.kind != "commitments") continue;
        (msg.sender == "z" ? copy_at : last_honest) = i;
    }
    CHECK(copy_at > last_honest);
    CHECK(commitments_of(attacked, "z") == commitments_of(attacked, "u0"));
    CHECK(attacked.transcript.misbehaving == std::vector<std::string>{"z"});
    CHECK(attacked.outcome.bids == std::vector<double>{3.0, 1.5, 2.5, 0.0});
}

TEST_CASE("coin toss") {
    SUBCASE("deterministic for fixed seeds") {
        const auto a = coin_toss(4, {}, 17);
        const auto b = coin_toss(4, {}, 17);
        CHECK(a.value == b.value);
        CHECK(a.excluded.empty());
        Fp sum;
        for (const auto& c : a.contributions) sum = sum + c;
        CHECK(sum == a.value);
        CHECK_FALSE(coin_toss(4, {}, 18).value == a.value);
    }
    SUBCASE("uniform output") {
        std::vector<int> counts(16, 0);
        for (std::uint64_t s = 0; s < 10000; ++s) ++counts[static_cast<std::size_t>(bucket16(coin_toss(3, {}, s).value))];
        CHECK(chi_square(counts) < kChi15);
    }
    SUBCASE("aborting miner is excluded and cannot move honest commitments") {
        const std::vector<MinerScript> scripts{MinerScript::honest, MinerScript::abort_in_reconstruction, MinerScript::honest};
        const auto honest = coin_toss(3, {}, 5);
        const auto attacked = coin_toss(3, scripts, 5);
        CHECK(attacked.excluded == std::vector<std::size_t>{1});
        CHECK(attacked.commitments[0] == honest.commitments[0]);
        CHECK(attacked.commitments[2] == honest.commitments[2]);
        CHECK(attacked.value == honest.contributions[0] + honest.contributions[2]);
        CHECK_FALSE(attacked.transcript.notes.empty());
    }
}

TEST_CASE("efficient instantiation") {
    const auto cfg = config_for(4, {3.0, 1.5, 2.5, 4.0}, random_selection(1.0, 2), 3);
    SUBCASE("exactly k confirmed and deterministic") {
        const auto a = run_efficient_instantiation(cfg);
        const auto b = run_efficient_instantiation(cfg);
        CHECK(a.realized.confirmed_count() == 2);
        CHECK(a.realized.confirmed == b.realized.confirmed);
        CHECK(a.seed == b.seed);
        CHECK(a.expected.x == evaluate(cfg.rule, std::span<const double>(a.bids)).x);
        CHECK(a.realized.confirmed == sample_outcome(cfg.rule, std::span<const double>(a.bids), a.seed).confirmed);
    }
    SUBCASE("empirical confirmation matches k/l") {
        constexpr int kRuns = 100000;
        std::vector<int> hits(4, 0);
        auto c = cfg;
        for (int r = 0; r < kRuns; ++r) {
            c.seed = static_cast<std::uint64_t>(r);
            const auto run = run_efficient_instantiation(c);
            for (std::size_t i = 0; i < 4; ++i) hits[i] += run.realized.confirmed[i] ? 1 : 0;
        }
        const double sigma = std::sqrt(0.5 * 0.5 / kRuns);
        for (int h : hits) CHECK(std::abs(h / static_cast<double>(kRuns) - 0.5) < 4 * sigma);
    }
}

TEST_CASE("trace replay re-derives the run") {
    auto cfg = config_for(4, {3.0, 1.5, 2.5}, random_selection(), 12345678901234567ULL);
    cfg.identities[0].script = IdentityScript::bad_opening;
    cfg.identities[0].target_miner = 2;
    const auto run = run_pi_mpc(cfg);
    auto trace = trace_to_json(cfg, run);
    const auto reparsed = nlohmann::json::parse(trace.dump());
    const auto res = replay(reparsed);
    CHECK(res.messages_match);
    CHECK(res.outcome_match);
    CHECK(res.run.outcome == run.outcome);
    for (const auto& msg : trace.at("messages")) {
        CHECK(msg.contains("round"));
        CHECK((msg.at("channel") == "broadcast" || msg.contains("recipient")));
    }
    trace["outcome"]["bids"][0] = 99.0;
    CHECK_FALSE(replay(trace).outcome_match);
}

TEST_CASE("config json round trip") {
    auto cfg = config_for(5, {1.0, 2.0}, random_selection(), 42);
    cfg.identities[1].script = IdentityScript::equivocate;
    cfg.miner_scripts = {MinerScript::honest, MinerScript::suppress_identities, MinerScript::honest, MinerScript::honest,
                         MinerScript::honest};
    const auto back = protocol_config_from_json(to_json(cfg));
    CHECK(to_json(back) == to_json(cfg));
    CHECK_THROWS_AS(protocol_config_from_json(nlohmann::json{{"m", 3}}), InvalidParameters);
    CHECK_THROWS_AS(identity_script_from_string("nope"), InvalidParameters);
}
