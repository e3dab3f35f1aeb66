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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include <tfm/core.hpp>
#include <tfm/mechanisms.hpp>
#include <tfm/strategy.hpp>

namespace tfm {

enum class Property { uic, mic, scp };
enum class Setting { ex_post, bayesian };

const char* to_string(Property property) noexcept;
const char* to_string(Setting setting) noexcept;
Property property_from_string(const std::string& name);

//! Gains within this of the target pass. Matches the grid offset: a deviation
//! one offset away from a breakpoint can shift utility by that order.
inline constexpr double kAuditTolerance = 1e-6;

struct GridStats {
    std::size_t grid_points{0};
    double max_cell_width{0.0};
    std::uint64_t strategies{0};
    std::size_t scenarios{0};
    std::size_t profiles{0};  // honest bid profiles per strategy (Bayesian)
};

struct AuditReport {
    Property property{Property::uic};
    Setting setting{Setting::ex_post};
    double rho{0.0};
    std::size_t c{0};
    double gain{0.0};
    double epsilon{0.0};
    bool pass{true};
    Strategy witness;
    std::vector<double> witness_honest_bids;  // ex post only
    std::vector<double> witness_values;
    GridStats grid_stats;
    std::optional<double> mc_stderr;
};

nlohmann::json to_json(const AuditReport& report);

//! Honest bids outside the coalition and the true values of the members.
struct ExPostScenario {
    std::vector<double> honest_bids;
    std::vector<double> member_values;
};

//! Checks that (property, rho, c) describe a legal coalition for the model.
void check_coalition(Property property, Model model, double rho, std::size_t c);

//! Worst gain over strategies, honest play as the baseline.
AuditReport audit_ex_post(const MechanismRule& rule, Property property, const CoalitionSpec& coalition,
                          std::span<const double> honest_bids, double target_epsilon, const StrategyLimits& limits,
                          const std::optional<BidGrid>& grid = std::nullopt, std::size_t max_grid_points = 64);

//! Worst gain over several scenarios; the witness comes from the worst one.
AuditReport audit_ex_post(const MechanismRule& rule, Property property, double rho,
                          std::span<const ExPostScenario> scenarios, double target_epsilon,
                          const StrategyLimits& limits, std::size_t max_grid_points = 64);

struct MonteCarlo {
    std::size_t samples{100000};
    std::uint64_t seed{0};
};

struct BayesianOptions {
    std::optional<MonteCarlo> monte_carlo;  // empty: exact enumeration
    double exact_cap{1e6};                   // |support|^n_honest limit for exact
};

//! Expectations over n_honest bids drawn i.i.d. from D. MPC-model rules only;
//! in the plain model the coalition moves after seeing the bids.
AuditReport audit_bayesian(const MechanismRule& rule, Property property, const CoalitionSpec& coalition,
                           const ValueDistribution& distribution, std::size_t n_honest, double target_epsilon,
                           const StrategyLimits& limits, const BayesianOptions& options = {},
                           const std::optional<BidGrid>& grid = std::nullopt, std::size_t max_grid_points = 64);

//! Weighted honest profiles of D^n. Valid for symmetric rules: each multiset
//! appears once with its multinomial probability.
struct WeightedProfile {
    std::vector<double> bids;
    double weight{0.0};
};
std::vector<WeightedProfile> honest_profiles(const ValueDistribution& distribution, std::size_t n);

//! Interim quantities for one user bidding b against n - 1 honest bids from D.
struct InterimOutcome {
    double x{0.0};
    double p{0.0};
    double mu{0.0};
};
InterimOutcome interim(const MechanismRule& rule, const ValueDistribution& distribution, std::size_t n, double bid);

//! Slacks a mechanism is designed to meet. Empty fields mean no claim.
struct DesignSlack {
    std::optional<double> uic;
    std::optional<double> mic;
    std::optional<double> scp;
};

//! Design slacks against a (rho, c) coalition.
DesignSlack design_slack(const MechanismRule& rule, double rho, std::size_t c);

struct SandwichResidual {
    double y{0.0};
    double z{0.0};
    double upper{0.0};  // z dx + eps - dp
    double lower{0.0};  // dp - y dx + eps
};

std::vector<SandwichResidual> check_payment_sandwich(const MechanismRule& rule, const ValueDistribution& distribution,
                                                     std::size_t n, double epsilon,
                                                     std::span<const std::pair<double, double>> pairs);

struct MinerStepResidual {
    double y{0.0};
    double z{0.0};
    double step{0.0};      // (eps_u + eps_s + S) / rho - (mu(z) - mu(y))
    double two_case{0.0};  // bound(z) - (mu(z) - mu(0))
};

//! 2 eps' / rho when r <= eps', else 2 sqrt(r eps') / rho.
double two_case_bound(double r, double eps_prime, double rho);

std::vector<MinerStepResidual> check_miner_revenue_step(const MechanismRule& rule,
                                                        const ValueDistribution& distribution, std::size_t n,
                                                        double rho, double eps_u, double eps_s,
                                                        std::span<const std::pair<double, double>> pairs);

struct RevenueLimit {
    double lhs{0.0};
    double rhs{0.0};
    bool pass{true};
};

//! E_{D^n}[mu] <= (2n / rho)(eps + C_D sqrt(eps)), eps = eps_u + eps_m + eps_s.
RevenueLimit check_revenue_limit(const MechanismRule& rule, const ValueDistribution& distribution, std::size_t n,
                                 double rho, double eps_u, double eps_m, double eps_s);

double revenue_ceiling(const ValueDistribution& distribution, std::size_t n, double rho, double epsilon);

//! Exact E_{D^n}[mu].
double expected_revenue(const MechanismRule& rule, const ValueDistribution& distribution, std::size_t n);

struct WelfareCeiling {
    double miner_rev_bound{0.0};
    double per_user_bound{0.0};
    double welfare_bound{0.0};
    double worst_miner_ratio{0.0};
    double worst_user_ratio{0.0};
    double worst_welfare_ratio{0.0};
    bool pass{true};
};

//! Closed-form ceilings for plain-model finite-block eps-IC rules.
WelfareCeiling welfare_ceiling_bounds(std::size_t k, double value_cap, double epsilon);

//! Evaluates truthful play on each value vector and compares with the bounds.
WelfareCeiling check_welfare_ceiling(const MechanismRule& rule, std::span<const std::vector<double>> corpus,
                                     std::size_t k, double value_cap, double epsilon);

struct ConstantRevenue {
    double max_deviation{0.0};
    double expected_revenue{0.0};
};

//! max over the grid of |mu_i(b) - mu_i(0)| and E_{D^n}[mu].
ConstantRevenue check_constant_revenue(const MechanismRule& rule, const ValueDistribution& distribution,
                                       std::size_t n, const BidGrid& grid);

}  // namespace tfm
