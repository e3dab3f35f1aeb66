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
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include <tfm/core.hpp>
#include <tfm/mechanisms.hpp>

namespace tfm {

struct CoalitionMember {
    std::size_t user{0};
    double true_value{0.0};
};

//! rho is the colluding miner fraction. In the plain model any rho > 0 means
//! the (single) miner is in the coalition.
struct CoalitionSpec {
    double rho{0.0};
    std::vector<CoalitionMember> members;

    [[nodiscard]] std::size_t c() const noexcept { return members.size(); }
    [[nodiscard]] bool has_miner() const noexcept { return rho > 0.0; }
};

//! One joint deviation. The bid vector it produces is: honest bids, then each
//! member's bids in member order, then fake bids.
struct Strategy {
    //! Per member; empty means the member drops out. The first bid carries the
    //! member's transaction, later bids are extra identities.
    std::vector<std::vector<double>> member_bids;
    std::vector<double> fake_bids;
    //! Plain model only. Indices into the assembled bid vector; empty means the
    //! honest inclusion rule.
    std::optional<std::vector<std::size_t>> inclusion;
};

//! Truthful bids from every member and no fakes.
Strategy honest_strategy(const CoalitionSpec& coalition);

struct AppliedStrategy {
    std::vector<double> bids;
    CoalitionAccounting accounting;
};

AppliedStrategy apply_strategy(const Strategy& strategy, std::span<const double> honest_bids,
                               const CoalitionSpec& coalition, Model model);

//! Exact outcome of a strategy against fixed honest bids.
Outcome evaluate_strategy(const MechanismRule& rule, const AppliedStrategy& applied,
                          const std::optional<std::vector<std::size_t>>& inclusion);

//! Coalition utility of a strategy against fixed honest bids.
double strategy_utility(const MechanismRule& rule, const Strategy& strategy, std::span<const double> honest_bids,
                        const CoalitionSpec& coalition);

nlohmann::json to_json(const Strategy& strategy);

//! Inputs that determine which bid amounts matter.
struct GridScenario {
    std::vector<double> honest_bids;
    std::vector<double> true_values;
    std::optional<ValueDistribution> distribution;
    double rho{0.0};
};

//! Ascending candidate bid amounts, always containing 0.
struct BidGrid {
    std::vector<double> points;

    [[nodiscard]] std::size_t size() const noexcept { return points.size(); }
    [[nodiscard]] double max_cell_width() const noexcept;
};

inline constexpr double kGridOffset = 1e-6;

//! 0, the rule's breakpoints, support points of D, honest bids, true values and
//! the value-dependent optima of the coalition utility, each with +/- offset,
//! plus a cap of twice the largest point. Throws BudgetExceeded above
//! max_points.
BidGrid build_grid(const MechanismRule& rule, const GridScenario& scenario, std::size_t max_points = 64);

struct StrategyLimits {
    std::size_t max_fake{1};
    std::size_t max_bids_per_member{1};
    std::size_t inclusion_pool_cap{12};
    std::uint64_t budget{10'000'000};
};

//! Exhaustive, deterministic enumeration. Strategy #0 is honest. Members vary
//! fastest (member 0 first), then fakes; in the plain model with a colluding
//! miner each bid strategy is followed by its inclusion choices. Each member's
//! options are: truthful, drop out, then grid multisets by size.
class StrategyEnumerator {
  public:
    StrategyEnumerator(const CoalitionSpec& coalition, const BidGrid& grid, const StrategyLimits& limits, Model model,
                       std::size_t honest_bid_count, std::optional<std::size_t> block_size);

    //! Total number of strategies; computed without enumerating.
    [[nodiscard]] std::uint64_t count() const noexcept { return count_; }

    //! Visits every strategy in order. The visitor returns false to stop early.
    void for_each(const std::function<bool(const Strategy&)>& visit) const;

  private:
    std::vector<std::vector<double>> member_options(std::size_t member) const;

    CoalitionSpec coalition_;
    BidGrid grid_;
    StrategyLimits limits_;
    Model model_;
    std::size_t honest_bid_count_;
    std::optional<std::size_t> block_size_;
    std::vector<std::vector<std::vector<double>>> options_;
    std::vector<std::vector<double>> fake_options_;
    std::uint64_t count_{0};
};

//! Multisets of grid points of the given size, in lexicographic index order.
std::vector<std::vector<double>> grid_multisets(const BidGrid& grid, std::size_t size);

//! All index subsets of {0..pool-1} of size at most max_size, by size then
//! lexicographically.
std::vector<std::vector<std::size_t>> bounded_subsets(std::size_t pool, std::size_t max_size);

}  // namespace tfm
