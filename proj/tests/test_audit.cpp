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

#include <doctest.h>

#include <tfm/audit.hpp>

using namespace tfm;

namespace {

// Independent oracle: best single bid for a plain proportional coalition of
// the miner and one user, found by a fine scan. Other bids do not interact.
double proportional_scp_oracle(double r, double eps, double v) {
    const double theta = std::sqrt(2 * r * eps);
    const auto f = [&](double b) {
        const double x = std::min(b / r, 1.0);
        const double pay = std::min(b / 2, r / 2);
        const double miner = b >= theta ? theta / 2 : 0.0;
        return x * (v - pay + miner);
    };
    double best = f(v);
    for (double b = 0.0; b <= 3 * r; b += 1e-4) best = std::max(best, f(b));
    best = std::max(best, f(theta));
    return best - f(v);
}

}  // namespace

TEST_CASE("coalition shape validation") {
    CHECK_THROWS_AS(check_coalition(Property::uic, Model::mpc, 0.5, 1), InvalidParameters);
    CHECK_THROWS_AS(check_coalition(Property::mic, Model::mpc, 0.5, 1), InvalidParameters);
    CHECK_THROWS_AS(check_coalition(Property::scp, Model::mpc, 0.0, 1), InvalidParameters);
    CHECK_THROWS_AS(check_coalition(Property::scp, Model::mpc, 1.5, 1), InvalidParameters);
    CHECK_NOTHROW(check_coalition(Property::scp, Model::mpc, 0.1, 2));
}

TEST_CASE("proportional ex post audits") {
    const auto rule = make_proportional({8.0, 2.0, 1.0, Model::plain});
    StrategyLimits lim;
    const std::vector<double> others{3.0, 9.0};

    for (double v : {0.5, 4.0, 5.65, 8.0, 12.0}) {
        const auto uic = audit_ex_post(rule, Property::uic, CoalitionSpec{0.0, {{0, v}}}, others, 0.0, lim);
        CHECK(uic.gain <= 1e-9);
        CHECK(uic.pass);
    }
    const auto mic = audit_ex_post(rule, Property::mic, CoalitionSpec{1.0, {}}, others, 0.0, lim);
    CHECK(mic.gain <= 1e-9);

    for (double v : {1.0, 3.0, 5.0, 5.65, 7.0}) {
        CAPTURE(v);
        const auto scp = audit_ex_post(rule, Property::scp, CoalitionSpec{1.0, {{0, v}}}, others, 2.5, lim);
        CHECK(scp.gain == doctest::Approx(proportional_scp_oracle(8.0, 2.0, v)).epsilon(1e-6));
        CHECK(scp.gain <= 2.5);
    }
    const auto witness = audit_ex_post(rule, Property::scp, CoalitionSpec{1.0, {{0, 5.65}}}, others, 2.5, lim);
    CHECK(witness.gain == doctest::Approx(2.4832706).epsilon(1e-6));
    CHECK(to_json(witness).at("pass") == true);
}

TEST_CASE("random selection: strict for one colluding user, broken by two") {
    const auto rule = make_posted_price({5.0, true, 2, Model::mpc});
    StrategyLimits lim;
    for (double rho : {0.1, 0.5, 1.0}) {
        for (double v : {2.0, 5.0, 8.0}) {
            const std::vector<double> others{7.0, 6.0};
            CHECK(audit_ex_post(rule, Property::scp, CoalitionSpec{rho, {{0, v}}}, others, 0.0, lim).gain <= 1e-9);
        }
        CHECK(audit_ex_post(rule, Property::mic, CoalitionSpec{rho, {}}, std::vector<double>{7.0, 6.0, 9.0}, 0.0, lim)
                  .gain <= 1e-9);
    }
    const auto broken =
        audit_ex_post(rule, Property::scp, CoalitionSpec{1.0, {{0, 5.0}, {1, 20.0}}}, std::vector<double>{7.0}, 0.0, lim);
    CHECK(broken.gain == doctest::Approx((20.0 - 5.0) / 3.0));
    CHECK_FALSE(broken.pass);
    CHECK(broken.witness.member_bids[0].empty());
}

TEST_CASE("bayesian audits") {
    const auto rule = make_posted_price({5.0, true, 2, Model::mpc});
    const auto d = ValueDistribution::uniform({2.0, 5.0, 9.0});
    StrategyLimits lim;
    const auto uic = audit_bayesian(rule, Property::uic, CoalitionSpec{0.0, {{0, 7.0}}}, d, 3, 0.0, lim);
    CHECK(uic.gain <= 1e-9);
    CHECK(uic.grid_stats.profiles == 10);

    // A point mass reduces to the ex post audit on that profile.
    const auto point = ValueDistribution::point_mass(6.0);
    const CoalitionSpec c{0.5, {{0, 5.0}, {1, 20.0}}};
    const auto bayes = audit_bayesian(rule, Property::scp, c, point, 1, 0.0, lim);
    const auto post = audit_ex_post(rule, Property::scp, c, std::vector<double>{6.0}, 0.0, lim);
    CHECK(bayes.gain == post.gain);

    // Monte Carlo within 4 standard errors of exact.
    const auto diluted = make_diluted({2, 2, 10.0, 1.0, 3.0, DilutedPreset::body});
    const auto dd = ValueDistribution::uniform({1.0, 4.0, 8.0});
    const CoalitionSpec pair{0.5, {{0, 2.9}, {1, 9.0}}};
    StrategyLimits small{0, 1, 12, 1000000};
    const auto exact = audit_bayesian(diluted, Property::scp, pair, dd, 4, 1.0, small);
    const auto mc = audit_bayesian(diluted, Property::scp, pair, dd, 4, 1.0, small,
                                   BayesianOptions{MonteCarlo{20000, 3}, 1e6});
    REQUIRE(mc.mc_stderr.has_value());
    CHECK(std::abs(mc.gain - exact.gain) <= 4 * *mc.mc_stderr + 1e-9);
    CHECK(exact.gain <= 1.0 + kAuditTolerance);

    CHECK_THROWS_AS(audit_bayesian(rule, Property::uic, CoalitionSpec{0.0, {{0, 1.0}}}, d, 13, 0.0, lim,
                                   BayesianOptions{std::nullopt, 1e6}),
                    BudgetExceeded);
    CHECK_THROWS_AS(audit_bayesian(make_staircase({10.0, 5, 1.0}), Property::uic, CoalitionSpec{0.0, {{0, 1.0}}}, d,
                                   2, 0.0, lim),
                    InvalidParameters);
}

TEST_CASE("honest profiles carry multinomial weights") {
    const ValueDistribution d({1.0, 2.0}, {0.25, 0.75});
    const auto profiles = honest_profiles(d, 3);
    CHECK(profiles.size() == 4);
    double total = 0.0;
    for (const auto& p : profiles) total += p.weight;
    CHECK(total == doctest::Approx(1.0));
    CHECK(profiles.front().weight == doctest::Approx(0.25 * 0.25 * 0.25));
    CHECK(profiles[1].weight == doctest::Approx(3 * 0.25 * 0.25 * 0.75));
    CHECK(honest_profiles(d, 0).size() == 1);

    // Oracle: brute-force ordered enumeration of D^n.
    const auto rule = make_diluted({2, 1, 10.0, 1.0, 2.0, DilutedPreset::body});
    const auto d3 = ValueDistribution::uniform({0.5, 2.0, 9.0});
    double brute = 0.0;
    for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b)
            for (int c = 0; c < 3; ++c)
                for (int e = 0; e < 3; ++e) {
                    const std::vector<double> bids{d3.support()[a], d3.support()[b], d3.support()[c], d3.support()[e]};
                    brute += evaluate(rule, bids).mu / 81.0;
                }
    CHECK(expected_revenue(rule, d3, 4) == doctest::Approx(brute));
}

TEST_CASE("payment sandwich") {
    const auto prop = make_proportional({8.0, 2.0, 1.0, Model::plain});
    const auto d = ValueDistribution::uniform({1.0, 6.0});
    const std::vector<std::pair<double, double>> pairs{{2.0, 6.0}, {3.0, 3.0}, {0.0, 10.0}};
    const auto res = check_payment_sandwich(prop, d, 3, 0.0, pairs);
    for (const auto& r : res) {
        CHECK(r.upper >= -1e-9);
        CHECK(r.lower >= -1e-9);
    }
    // Closed-form oracle: p(b) = b^2 / 2r below r.
    CHECK(res[0].upper == doctest::Approx(6.0 * 0.5 - (36.0 - 4.0) / 16.0));
    const auto same = check_payment_sandwich(prop, d, 3, 0.7, std::vector<std::pair<double, double>>{{4.0, 4.0}});
    CHECK(same[0].upper == doctest::Approx(0.7));
    CHECK(same[0].lower == doctest::Approx(0.7));

    const auto stair = make_staircase({10.0, 5, 1.0});
    const auto grid = build_grid(stair, GridScenario{{}, {}, d, 1.0});
    std::vector<std::pair<double, double>> all;
    for (double y : grid.points)
        for (double z : grid.points)
            if (y <= z) all.emplace_back(y, z);
    for (const auto& r : check_payment_sandwich(stair, d, 3, 1.0, all)) {
        CHECK(r.upper >= -1e-6);
        CHECK(r.lower >= -1e-6);
    }
}

TEST_CASE("miner revenue step and two-case bound") {
    CHECK(two_case_bound(0.5, 1.0, 1.0) == 2.0);
    CHECK(two_case_bound(4.0, 1.0, 0.5) == doctest::Approx(8.0));

    const double eps = 1.0;
    const auto posted = make_posted_price({eps, false, std::nullopt, Model::plain});
    const auto d = ValueDistribution::uniform({0.5, 2.0});
    const auto slack = design_slack(posted, 1.0, 1);
    const std::vector<std::pair<double, double>> pairs{{0.0, 1.0}, {1.0, 1.0}, {0.0, 5.0}, {0.5, 2.0}};
    const auto res = check_miner_revenue_step(posted, d, 4, 1.0, *slack.uic, *slack.scp, pairs);
    for (const auto& r : res) {
        CHECK(r.step >= -1e-9);
        CHECK(r.two_case >= -1e-9);
    }
    // mu(r) - mu(0) = r for the deviating bid: the two-case bound is 2 eps'.
    CHECK(res[0].two_case == doctest::Approx(2.0 - 1.0));
    CHECK(res[1].step == doctest::Approx(slack.scp.value()));

    const auto prop = make_proportional({8.0, 2.0, 1.0, Model::plain});
    const auto ps = design_slack(prop, 1.0, 1);
    for (double z : {std::sqrt(32.0), 7.0, 8.0, 12.0}) {
        const auto r = check_miner_revenue_step(prop, d, 2, 1.0, *ps.uic, *ps.scp,
                                                std::vector<std::pair<double, double>>{{0.0, z}});
        const double rise = std::min(z / 8.0, 1.0) * std::sqrt(32.0) / 2.0;
        CHECK(two_case_bound(z, 2.5, 1.0) - rise == doctest::Approx(r[0].two_case));
        CHECK(r[0].two_case >= 0.0);
    }
}

TEST_CASE("revenue limit") {
    const auto posted = make_posted_price({1.0, false, std::nullopt, Model::plain});
    const auto d = ValueDistribution::uniform({0.5, 2.0});
    const auto r = check_revenue_limit(posted, d, 10, 1.0, 0.0, 0.0, 1.0);
    CHECK(r.lhs == doctest::Approx(5.0));
    CHECK(r.rhs == doctest::Approx(20.0 * (1.0 + (std::sqrt(0.5) + std::sqrt(2.0)) / 2.0)));
    CHECK(r.pass);

    const auto burn = make_posted_price({1.0, true, std::nullopt, Model::mpc});
    CHECK(check_revenue_limit(burn, d, 6, 0.5, 0, 0, 0).lhs == 0.0);
    CHECK(revenue_ceiling(d, 10, 1.0, 0.0) == 0.0);
}

TEST_CASE("welfare ceiling") {
    const auto b = welfare_ceiling_bounds(5, 10.0, 1.0);
    CHECK(b.miner_rev_bound == doctest::Approx(12 * 25 * std::log2(11.0) + 10));
    CHECK(b.per_user_bound == doctest::Approx(b.miner_rev_bound + 1.0));
    CHECK(welfare_ceiling_bounds(5, 1.5, 1.0).miner_rev_bound == doctest::Approx(10.0));

    const auto stair = make_staircase({10.0, 5, 1.0});
    std::vector<std::vector<double>> corpus{{10, 9, 5, 3, 1}, {10, 10, 10, 10, 10}, {}, {6, 6}};
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> value(0.0, 10.0);
    for (int i = 0; i < 100; ++i) corpus.push_back({value(rng), value(rng), value(rng), value(rng)});
    const auto w = check_welfare_ceiling(stair, corpus, 5, 10.0, 1.0);
    CHECK(w.pass);
    CHECK(w.worst_miner_ratio > 0.0);
    CHECK(w.worst_miner_ratio <= 1.0);
}

TEST_CASE("constant revenue diagnostic") {
    const auto d = ValueDistribution::uniform({1.0, 6.0});
    const BidGrid grid{{0.0, 2.0, 5.0, 7.0}};
    const auto burn = check_constant_revenue(make_posted_price({5.0, true, std::nullopt, Model::mpc}), d, 3, grid);
    CHECK(burn.max_deviation == 0.0);
    CHECK(burn.expected_revenue == 0.0);
    const auto rs = check_constant_revenue(make_posted_price({5.0, true, 2, Model::mpc}), d, 3, grid);
    CHECK(rs.max_deviation == 0.0);
    const auto paying = check_constant_revenue(make_posted_price({5.0, false, std::nullopt, Model::plain}), d, 3, grid);
    CHECK(paying.max_deviation == doctest::Approx(5.0));
    CHECK(paying.expected_revenue > 0.0);
}

TEST_CASE("design slack table") {
    CHECK(design_slack(make_posted_price({5.0, true, 2, Model::mpc}), 0.5, 1).scp == 0.0);
    CHECK_FALSE(design_slack(make_posted_price({5.0, true, 2, Model::mpc}), 0.5, 2).scp.has_value());
    CHECK(design_slack(make_proportional({8.0, 2.0, 1.0, Model::plain}), 1.0, 3).scp == doctest::Approx(7.5));
    CHECK(design_slack(make_staircase({10.0, 5, 1.0}), 1.0, 1).uic == 1.0);
    CHECK_FALSE(design_slack(make_staircase({10.0, 5, 1.0}), 1.0, 2).scp.has_value());
    CHECK(design_slack(make_diluted({2, 2, 16.0, 2.0, 4.0, DilutedPreset::body}), 0.3, 2).scp == 2.0);
    const auto hybrid = make_hybrid(ValueDistribution::uniform({1.0, 4.0}), 0.5, 1, 10);
    CHECK(design_slack(hybrid, 1.0, 1).scp.value() <= 0.5 + 1e-12);
}
