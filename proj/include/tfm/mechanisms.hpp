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
#include <variant>
#include <vector>

#include <json.hpp>

#include <tfm/core.hpp>

namespace tfm {

//! Posted price. Candidates are bids >= r; when there are more than k
//! candidates a uniformly random k-subset is confirmed. Confirmed bids pay r.
//! A finite-block MPC instance with burning is the random-selection auction.
struct PostedPriceParams {
    double reserve{0.0};
    bool burn{true};
    std::optional<std::size_t> block_size;  // empty: infinite block
    Model model{Model::mpc};
};

//! Proportional auction; confirmation probability min(b/r, 1).
struct ProportionalParams {
    double reserve{0.0};
    double slack{0.0};
    double miner_fraction{1.0};  // only read by the MPC variant
    Model model{Model::plain};
};

enum class DilutedPreset { body, intro };

//! Diluted posted price: candidates are padded with zeros to a pool of T and
//! k pool slots are drawn uniformly.
struct DilutedParams {
    std::size_t block_size{1};
    std::size_t collusion_bound{1};
    double value_cap{0.0};
    double slack{0.0};
    double reserve{0.0};
    DilutedPreset preset{DilutedPreset::body};
};

//! Staircase mechanism (plain model, finite block).
struct StaircaseParams {
    double value_cap{0.0};
    std::size_t block_size{1};
    double slack{0.0};
};

using MechanismParams = std::variant<PostedPriceParams, ProportionalParams, DilutedParams, StaircaseParams>;

//! Records how make_hybrid picked its branch.
struct HybridInfo {
    enum class Branch { posted_price, proportional };
    Branch branch{Branch::posted_price};
    double epsilon{0.0};
    std::size_t collusion_bound{1};
    std::size_t users{1};
    ValueDistribution distribution{ValueDistribution::point_mass(0.0)};
    double posted_revenue{0.0};                 // n * E_single[mu]
    std::optional<double> proportional_revenue;  // empty when the branch was infeasible
    double proportional_slack{0.0};
    std::string fallback_reason;
};

class MechanismRule {
  public:
    [[nodiscard]] const MechanismParams& params() const noexcept { return params_; }
    template <class T>
    [[nodiscard]] const T& as() const {
        return std::get<T>(params_);
    }
    template <class T>
    [[nodiscard]] bool is() const noexcept {
        return std::holds_alternative<T>(params_);
    }

    [[nodiscard]] Model model() const noexcept;
    [[nodiscard]] std::optional<std::size_t> block_size() const noexcept;
    //! "posted_price", "random_selection", "proportional", "diluted",
    //! "staircase" or "hybrid".
    [[nodiscard]] std::string name() const;
    [[nodiscard]] const std::optional<HybridInfo>& hybrid() const noexcept { return hybrid_; }
    //! Whether the allocation is randomized for some bid vector.
    [[nodiscard]] bool randomized() const noexcept;

    //! Bid amounts where the rule's x, p or mu change shape.
    [[nodiscard]] std::vector<double> breakpoints() const;
    //! Staircase prices F_0..F_k.
    [[nodiscard]] const std::vector<double>& ladder() const noexcept { return ladder_; }
    //! Diluted pool size T (integer).
    [[nodiscard]] std::size_t pool_size() const noexcept { return pool_size_; }
    //! Proportional miner threshold sqrt(2 r eps).
    [[nodiscard]] double miner_threshold() const noexcept { return miner_threshold_; }

  private:
    friend MechanismRule make_posted_price(const PostedPriceParams&);
    friend MechanismRule make_proportional(const ProportionalParams&);
    friend MechanismRule make_diluted(const DilutedParams&);
    friend MechanismRule make_staircase(const StaircaseParams&);
    friend MechanismRule make_hybrid(const ValueDistribution&, double, std::size_t, std::size_t);

    explicit MechanismRule(MechanismParams params) : params_(std::move(params)) {}

    MechanismParams params_;
    std::optional<HybridInfo> hybrid_;
    std::vector<double> ladder_;
    std::size_t pool_size_{0};
    double miner_threshold_{0.0};
};

MechanismRule make_posted_price(const PostedPriceParams& params);
MechanismRule make_proportional(const ProportionalParams& params);
MechanismRule make_diluted(const DilutedParams& params);
MechanismRule make_staircase(const StaircaseParams& params);

//! Picks the branch with the larger exact expected miner revenue over D^n:
//! pay-to-miner posted price at min(eps/c, median) or proportional at the
//! median with slack 4 eps / (5c). Ties go to posted price.
MechanismRule make_hybrid(const ValueDistribution& distribution, double epsilon, std::size_t c, std::size_t n);

//! Exact expected miner revenue of one bid drawn from D, for per-bid
//! independent rules (infinite-block posted price, proportional).
double single_bid_revenue(const MechanismRule& rule, const ValueDistribution& distribution);

//! Largest i with sorted_block[i-1] >= F_i, or 0. Requires a descending block
//! of at most k bids.
std::size_t staircase_threshold(std::span<const double> sorted_block, const MechanismRule& rule);

//! Exact expected outcome. Plain-model rules use the honest inclusion rule.
Outcome evaluate(const MechanismRule& rule, const BidVector& bids);
Outcome evaluate(const MechanismRule& rule, std::span<const double> amounts);

//! Plain model only: outcome when the miner includes exactly the bids at
//! `included` (at most k). Excluded bids get x = p = 0.
Outcome evaluate_with_inclusion(const MechanismRule& rule, std::span<const double> amounts,
                                std::span<const std::size_t> included);

//! One draw of the randomized rule; deterministic in seed.
Realization sample_outcome(const MechanismRule& rule, const BidVector& bids, std::uint64_t seed);
Realization sample_outcome(const MechanismRule& rule, std::span<const double> amounts, std::uint64_t seed);

nlohmann::json to_json(const MechanismRule& rule);
MechanismRule rule_from_json(const nlohmann::json& document);

nlohmann::json to_json(const ValueDistribution& distribution);
ValueDistribution distribution_from_json(const nlohmann::json& document);

}  // namespace tfm
