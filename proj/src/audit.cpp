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

#include <tfm/audit.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace tfm {

const char* to_string(Property property) noexcept {
    switch (property) {
        case Property::uic: return "UIC";
        case Property::mic: return "MIC";
        case Property::scp: return "SCP";
    }
    return "?";
}

const char* to_string(Setting setting) noexcept { return setting == Setting::ex_post ? "ex-post" : "bayesian"; }

Property property_from_string(const std::string& name) {
    if (name == "UIC" || name == "uic") return Property::uic;
    if (name == "MIC" || name == "mic") return Property::mic;
    if (name == "SCP" || name == "scp") return Property::scp;
    throw InvalidParameters("unknown property: " + name);
}

nlohmann::json to_json(const AuditReport& report) {
    nlohmann::json j;
    j["property"] = to_string(report.property);
    j["setting"] = to_string(report.setting);
    j["rho"] = report.rho;
    j["c"] = report.c;
    j["gain"] = report.gain;
    j["epsilon"] = report.epsilon;
    j["pass"] = report.pass;
    j["witness"] = {{"strategy", to_json(report.witness)},
                    {"honest_bids", report.witness_honest_bids},
                    {"member_values", report.witness_values}};
    j["grid_stats"] = {{"grid_points", report.grid_stats.grid_points},
                       {"max_cell_width", report.grid_stats.max_cell_width},
                       {"strategies", report.grid_stats.strategies},
                       {"scenarios", report.grid_stats.scenarios},
                       {"profiles", report.grid_stats.profiles}};
    j["mc_stderr"] = report.mc_stderr ? nlohmann::json(*report.mc_stderr) : nlohmann::json(nullptr);
    return j;
}

void check_coalition(Property property, Model model, double rho, std::size_t c) {
    if (!(rho >= 0.0 && rho <= 1.0)) throw InvalidParameters("rho must lie in [0, 1]");
    switch (property) {
        case Property::uic:
            if (c != 1 || rho != 0.0) throw InvalidParameters("UIC audits need exactly one user and no miner");
            break;
        case Property::mic:
            if (c != 0 || rho <= 0.0) throw InvalidParameters("MIC audits need a miner coalition and no users");
            break;
        case Property::scp:
            if (c < 1 || rho <= 0.0) throw InvalidParameters("SCP audits need a miner share and at least one user");
            break;
    }
    (void)model;
}

namespace {

    CoalitionSpec coalition_for(double rho, std::span<const double> member_values) {
        CoalitionSpec spec;
        spec.rho = rho;
        for (std::size_t i = 0; i < member_values.size(); ++i) spec.members.push_back({i, member_values[i]});
        return spec;
    }

    std::vector<double> member_values(const CoalitionSpec& coalition) {
        std::vector<double> out;
        for (const auto& m : coalition.members) out.push_back(m.true_value);
        return out;
    }

}  // namespace

AuditReport audit_ex_post(const MechanismRule& rule, Property property, const CoalitionSpec& coalition,
                          std::span<const double> honest_bids, double target_epsilon, const StrategyLimits& limits,
                          const std::optional<BidGrid>& grid, std::size_t max_grid_points) {
    check_coalition(property, rule.model(), coalition.rho, coalition.c());
    const auto values = member_values(coalition);
    const BidGrid used = grid ? *grid
                              : build_grid(rule,
                                           GridScenario{{honest_bids.begin(), honest_bids.end()}, values, std::nullopt,
                                                        coalition.rho},
                                           max_grid_points);
    const StrategyEnumerator enumerator(coalition, used, limits, rule.model(), honest_bids.size(), rule.block_size());

    AuditReport report;
    report.property = property;
    report.setting = Setting::ex_post;
    report.rho = coalition.rho;
    report.c = coalition.c();
    report.epsilon = target_epsilon;
    report.witness_honest_bids.assign(honest_bids.begin(), honest_bids.end());
    report.witness_values = values;
    report.grid_stats = {used.size(), used.max_cell_width(), enumerator.count(), 1, 1};

    const double baseline = strategy_utility(rule, honest_strategy(coalition), honest_bids, coalition);
    double best = -std::numeric_limits<double>::infinity();
    enumerator.for_each([&](const Strategy& s) {
        const double u = strategy_utility(rule, s, honest_bids, coalition);
        if (u > best) {
            best = u;
            report.witness = s;
        }
        return true;
    });
    report.gain = best - baseline;
    report.pass = report.gain <= target_epsilon + kAuditTolerance;
    return report;
}

AuditReport audit_ex_post(const MechanismRule& rule, Property property, double rho,
                          std::span<const ExPostScenario> scenarios, double target_epsilon,
                          const StrategyLimits& limits, std::size_t max_grid_points) {
    if (scenarios.empty()) throw InvalidParameters("audit needs at least one scenario");
    std::optional<AuditReport> worst;
    std::uint64_t strategies = 0;
    std::size_t points = 0;
    double width = 0.0;
    for (const auto& scenario : scenarios) {
        auto r = audit_ex_post(rule, property, coalition_for(rho, scenario.member_values), scenario.honest_bids,
                               target_epsilon, limits, std::nullopt, max_grid_points);
        strategies += r.grid_stats.strategies;
        points = std::max(points, r.grid_stats.grid_points);
        width = std::max(width, r.grid_stats.max_cell_width);
        if (!worst || r.gain > worst->gain) worst = std::move(r);
    }
    worst->grid_stats = {points, width, strategies, scenarios.size(), 1};
    return *worst;
}

std::vector<WeightedProfile> honest_profiles(const ValueDistribution& distribution, std::size_t n) {
    const auto& support = distribution.support();
    const auto& prob = distribution.probabilities();
    std::vector<WeightedProfile> out;
    std::vector<std::size_t> idx(n, 0);
    const double log_n_factorial = std::lgamma(static_cast<double>(n) + 1.0);
    while (true) {
        WeightedProfile profile;
        double log_weight = log_n_factorial;
        bool impossible = false;
        for (std::size_t j = 0; j < n;) {
            std::size_t run = j;
            while (run < n && idx[run] == idx[j]) ++run;
            const double count = static_cast<double>(run - j);
            if (prob[idx[j]] <= 0.0) impossible = true;
            log_weight += count * std::log(std::max(prob[idx[j]], 1e-300)) - std::lgamma(count + 1.0);
            j = run;
        }
        for (auto i : idx) profile.bids.push_back(support[i]);
        profile.weight = impossible ? 0.0 : std::exp(log_weight);
        if (!impossible) out.push_back(std::move(profile));

        std::size_t pos = n;
        while (pos > 0 && idx[pos - 1] == support.size() - 1) --pos;
        if (pos == 0) break;
        ++idx[pos - 1];
        for (std::size_t j = pos; j < n; ++j) idx[j] = idx[pos - 1];
    }
    return out;
}

AuditReport audit_bayesian(const MechanismRule& rule, Property property, const CoalitionSpec& coalition,
                           const ValueDistribution& distribution, std::size_t n_honest, double target_epsilon,
                           const StrategyLimits& limits, const BayesianOptions& options,
                           const std::optional<BidGrid>& grid, std::size_t max_grid_points) {
    check_coalition(property, rule.model(), coalition.rho, coalition.c());
    if (rule.model() != Model::mpc) {
        throw InvalidParameters("Bayesian audits apply to MPC-model rules; use ex post audits in the plain model");
    }
    const auto values = member_values(coalition);

    std::vector<WeightedProfile> profiles;
    if (options.monte_carlo) {
        std::mt19937_64 rng(options.monte_carlo->seed);
        const auto& prob = distribution.probabilities();
        std::discrete_distribution<std::size_t> draw(prob.begin(), prob.end());
        const double w = 1.0 / static_cast<double>(options.monte_carlo->samples);
        for (std::size_t s = 0; s < options.monte_carlo->samples; ++s) {
            WeightedProfile profile{{}, w};
            for (std::size_t i = 0; i < n_honest; ++i) profile.bids.push_back(distribution.support()[draw(rng)]);
            profiles.push_back(std::move(profile));
        }
    } else {
        const double joint = std::pow(static_cast<double>(distribution.support().size()), static_cast<double>(n_honest));
        if (joint > options.exact_cap) {
            throw BudgetExceeded("exact Bayesian audit needs " + std::to_string(joint) +
                                 " joint profiles; use the monte-carlo method");
        }
        profiles = honest_profiles(distribution, n_honest);
    }

    const BidGrid used = grid ? *grid
                              : build_grid(rule, GridScenario{{}, values, distribution, coalition.rho},
                                           max_grid_points);
    const StrategyEnumerator enumerator(coalition, used, limits, rule.model(), n_honest, rule.block_size());

    AuditReport report;
    report.property = property;
    report.setting = Setting::bayesian;
    report.rho = coalition.rho;
    report.c = coalition.c();
    report.epsilon = target_epsilon;
    report.witness_values = values;
    report.grid_stats = {used.size(), used.max_cell_width(), enumerator.count(), 1, profiles.size()};

    const auto honest = honest_strategy(coalition);
    std::vector<double> baseline(profiles.size());
    double baseline_mean = 0.0;
    for (std::size_t i = 0; i < profiles.size(); ++i) {
        baseline[i] = strategy_utility(rule, honest, profiles[i].bids, coalition);
        baseline_mean += profiles[i].weight * baseline[i];
    }
    double best = -std::numeric_limits<double>::infinity();
    enumerator.for_each([&](const Strategy& s) {
        double mean = 0.0;
        for (const auto& profile : profiles) mean += profile.weight * strategy_utility(rule, s, profile.bids, coalition);
        if (mean > best) {
            best = mean;
            report.witness = s;
        }
        return true;
    });
    report.gain = best - baseline_mean;
    if (options.monte_carlo) {
        // Paired differences against the same draws.
        const double t = static_cast<double>(profiles.size());
        double sum = 0.0, sum_sq = 0.0;
        for (std::size_t i = 0; i < profiles.size(); ++i) {
            const double d = strategy_utility(rule, report.witness, profiles[i].bids, coalition) - baseline[i];
            sum += d;
            sum_sq += d * d;
        }
        const double variance = t > 1 ? std::max(0.0, (sum_sq - sum * sum / t) / (t - 1.0)) : 0.0;
        report.mc_stderr = std::sqrt(variance / t);
    }
    report.pass = report.gain <= target_epsilon + kAuditTolerance;
    return report;
}

InterimOutcome interim(const MechanismRule& rule, const ValueDistribution& distribution, std::size_t n, double bid) {
    if (n == 0) throw InvalidParameters("interim quantities need n >= 1");
    InterimOutcome out;
    for (const auto& profile : honest_profiles(distribution, n - 1)) {
        auto bids = profile.bids;
        bids.push_back(bid);
        const auto o = evaluate(rule, bids);
        out.x += profile.weight * o.x.back();
        out.p += profile.weight * o.p.back();
        out.mu += profile.weight * o.mu;
    }
    return out;
}

DesignSlack design_slack(const MechanismRule& rule, double rho, std::size_t c) {
    DesignSlack slack;
    const double cc = static_cast<double>(c);
    if (const auto& h = rule.hybrid()) {
        slack.uic = 0.0;
        slack.mic = 0.0;
        if (c <= h->collusion_bound) slack.scp = h->epsilon;
        // The branch formulas below are tighter; fall through to them.
    }
    std::visit(
        [&](const auto& p) {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, PostedPriceParams>) {
                if (!p.block_size) {
                    slack.uic = 0.0;
                    slack.mic = 0.0;
                    slack.scp = p.burn ? 0.0 : cc * p.reserve;
                } else if (p.burn) {
                    slack.uic = 0.0;
                    slack.mic = 0.0;
                    if (p.model == Model::mpc && c <= 1) slack.scp = 0.0;
                }
            } else if constexpr (std::is_same_v<T, ProportionalParams>) {
                slack.uic = 0.0;
                slack.mic = 0.0;
                if (p.model == Model::plain) {
                    slack.scp = 1.25 * cc * p.slack;
                } else if (rho <= p.miner_fraction + kTolerance) {
                    slack.scp = 2.25 * cc * p.slack;
                }
            } else if constexpr (std::is_same_v<T, DilutedParams>) {
                slack.uic = 0.0;
                slack.mic = 0.0;
                if (p.preset == DilutedPreset::body && c <= p.collusion_bound) slack.scp = p.slack;
            } else if constexpr (std::is_same_v<T, StaircaseParams>) {
                slack.uic = p.slack;
                slack.mic = 0.0;
                if (c <= 1) slack.scp = p.slack;
            }
        },
        rule.params());
    return slack;
}

std::vector<SandwichResidual> check_payment_sandwich(const MechanismRule& rule, const ValueDistribution& distribution,
                                                     std::size_t n, double epsilon,
                                                     std::span<const std::pair<double, double>> pairs) {
    std::vector<SandwichResidual> out;
    for (const auto& [y, z] : pairs) {
        if (y > z) throw InvalidParameters("payment sandwich needs y <= z");
        const auto oy = interim(rule, distribution, n, y);
        const auto oz = interim(rule, distribution, n, z);
        const double dx = oz.x - oy.x;
        const double dp = oz.p - oy.p;
        out.push_back({y, z, z * dx + epsilon - dp, dp - y * dx + epsilon});
    }
    return out;
}

double two_case_bound(double r, double eps_prime, double rho) {
    if (r <= eps_prime) return 2.0 * eps_prime / rho;
    return 2.0 * std::sqrt(r * eps_prime) / rho;
}

std::vector<MinerStepResidual> check_miner_revenue_step(const MechanismRule& rule,
                                                        const ValueDistribution& distribution, std::size_t n,
                                                        double rho, double eps_u, double eps_s,
                                                        std::span<const std::pair<double, double>> pairs) {
    if (!(rho > 0.0 && rho <= 1.0)) throw InvalidParameters("rho must lie in (0, 1]");
    const double mu0 = interim(rule, distribution, n, 0.0).mu;
    std::vector<MinerStepResidual> out;
    for (const auto& [y, z] : pairs) {
        if (y > z) throw InvalidParameters("miner step needs y <= z");
        const auto oy = interim(rule, distribution, n, y);
        const auto oz = interim(rule, distribution, n, z);
        const double s = (z - y) * (oz.x - oy.x);
        out.push_back({y, z, (eps_u + eps_s + s) / rho - (oz.mu - oy.mu),
                       two_case_bound(z, eps_u + eps_s, rho) - (oz.mu - mu0)});
    }
    return out;
}

double expected_revenue(const MechanismRule& rule, const ValueDistribution& distribution, std::size_t n) {
    double total = 0.0;
    for (const auto& profile : honest_profiles(distribution, n)) total += profile.weight * evaluate(rule, profile.bids).mu;
    return total;
}

double revenue_ceiling(const ValueDistribution& distribution, std::size_t n, double rho, double epsilon) {
    return 2.0 * static_cast<double>(n) / rho * (epsilon + distribution.sqrt_moment() * std::sqrt(epsilon));
}

RevenueLimit check_revenue_limit(const MechanismRule& rule, const ValueDistribution& distribution, std::size_t n,
                                 double rho, double eps_u, double eps_m, double eps_s) {
    if (!(rho > 0.0 && rho <= 1.0)) throw InvalidParameters("rho must lie in (0, 1]");
    RevenueLimit out;
    out.lhs = expected_revenue(rule, distribution, n);
    out.rhs = revenue_ceiling(distribution, n, rho, eps_u + eps_m + eps_s);
    out.pass = out.lhs <= out.rhs + kAuditTolerance;
    return out;
}

WelfareCeiling welfare_ceiling_bounds(std::size_t k, double value_cap, double epsilon) {
    const double kk = static_cast<double>(k);
    WelfareCeiling out;
    if (value_cap < 2.0 * epsilon) {
        out.miner_rev_bound = 2.0 * kk * epsilon;
    } else {
        out.miner_rev_bound = 12.0 * kk * kk * epsilon * std::log2(value_cap / epsilon + 1.0) + 2.0 * kk * epsilon;
    }
    out.per_user_bound = out.miner_rev_bound + epsilon;
    out.welfare_bound = kk * out.per_user_bound + out.miner_rev_bound;
    return out;
}

WelfareCeiling check_welfare_ceiling(const MechanismRule& rule, std::span<const std::vector<double>> corpus,
                                     std::size_t k, double value_cap, double epsilon) {
    auto out = welfare_ceiling_bounds(k, value_cap, epsilon);
    const auto ratio = [](double observed, double bound) { return bound > 0.0 ? observed / bound : 0.0; };
    for (const auto& values : corpus) {
        const auto o = evaluate(rule, values);
        out.worst_miner_ratio = std::max(out.worst_miner_ratio, ratio(o.mu, out.miner_rev_bound));
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (o.x[i] <= 0.0) continue;  // conditional utility undefined
            const double conditional = values[i] - o.p[i] / o.x[i];
            out.worst_user_ratio = std::max(out.worst_user_ratio, ratio(conditional, out.per_user_bound));
        }
        out.worst_welfare_ratio = std::max(out.worst_welfare_ratio, ratio(social_welfare(o, values), out.welfare_bound));
        if (o.mu > out.miner_rev_bound + kAuditTolerance) out.pass = false;
        if (social_welfare(o, values) > out.welfare_bound + kAuditTolerance) out.pass = false;
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (o.x[i] > 0.0 && values[i] - o.p[i] / o.x[i] > out.per_user_bound + kAuditTolerance) out.pass = false;
        }
    }
    return out;
}

ConstantRevenue check_constant_revenue(const MechanismRule& rule, const ValueDistribution& distribution,
                                       std::size_t n, const BidGrid& grid) {
    ConstantRevenue out;
    const double mu0 = interim(rule, distribution, n, 0.0).mu;
    for (double b : grid.points) {
        out.max_deviation = std::max(out.max_deviation, std::abs(interim(rule, distribution, n, b).mu - mu0));
    }
    out.expected_revenue = expected_revenue(rule, distribution, n);
    return out;
}

}  // namespace tfm
