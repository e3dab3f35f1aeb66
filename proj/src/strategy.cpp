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

#include <tfm/strategy.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace tfm {

Strategy honest_strategy(const CoalitionSpec& coalition) {
    Strategy s;
    for (const auto& m : coalition.members) s.member_bids.push_back({m.true_value});
    return s;
}

AppliedStrategy apply_strategy(const Strategy& strategy, std::span<const double> honest_bids,
                               const CoalitionSpec& coalition, Model model) {
    if (strategy.member_bids.size() != coalition.members.size()) {
        throw InvalidParameters("strategy and coalition disagree on member count");
    }
    AppliedStrategy out;
    out.bids.assign(honest_bids.begin(), honest_bids.end());
    out.accounting.model = model;
    out.accounting.rho = coalition.rho;
    for (std::size_t m = 0; m < coalition.members.size(); ++m) {
        MemberBids owned;
        owned.true_value = coalition.members[m].true_value;
        for (std::size_t j = 0; j < strategy.member_bids[m].size(); ++j) {
            if (j == 0) {
                owned.real_bid = out.bids.size();
            } else {
                owned.extra_bids.push_back(out.bids.size());
            }
            out.bids.push_back(strategy.member_bids[m][j]);
        }
        out.accounting.members.push_back(std::move(owned));
    }
    for (double fake : strategy.fake_bids) {
        out.accounting.fake_bids.push_back(out.bids.size());
        out.bids.push_back(fake);
    }
    return out;
}

Outcome evaluate_strategy(const MechanismRule& rule, const AppliedStrategy& applied,
                          const std::optional<std::vector<std::size_t>>& inclusion) {
    if (inclusion) return evaluate_with_inclusion(rule, applied.bids, *inclusion);
    return evaluate(rule, applied.bids);
}

double strategy_utility(const MechanismRule& rule, const Strategy& strategy, std::span<const double> honest_bids,
                        const CoalitionSpec& coalition) {
    const auto applied = apply_strategy(strategy, honest_bids, coalition, rule.model());
    return coalition_utility(evaluate_strategy(rule, applied, strategy.inclusion), applied.accounting);
}

nlohmann::json to_json(const Strategy& strategy) {
    nlohmann::json j{{"member_bids", strategy.member_bids}, {"fake_bids", strategy.fake_bids}};
    j["inclusion"] = strategy.inclusion ? nlohmann::json(*strategy.inclusion) : nlohmann::json("honest");
    return j;
}

double BidGrid::max_cell_width() const noexcept {
    double width = 0.0;
    for (std::size_t i = 1; i < points.size(); ++i) width = std::max(width, points[i] - points[i - 1]);
    return width;
}

BidGrid build_grid(const MechanismRule& rule, const GridScenario& scenario, std::size_t max_points) {
    std::vector<double> anchors = rule.breakpoints();
    if (scenario.distribution) {
        const auto& support = scenario.distribution->support();
        anchors.insert(anchors.end(), support.begin(), support.end());
    }
    anchors.insert(anchors.end(), scenario.honest_bids.begin(), scenario.honest_bids.end());
    anchors.insert(anchors.end(), scenario.true_values.begin(), scenario.true_values.end());

    // Interior optima of the coalition utility in a member's own bid.
    if (const auto* p = std::get_if<ProportionalParams>(&rule.params())) {
        const double theta = rule.miner_threshold();
        for (double v : scenario.true_values) {
            anchors.push_back(v + theta / 2.0);
            if (p->model == Model::mpc && scenario.rho > 0.0 && scenario.rho < 1.0) {
                anchors.push_back(v / (1.0 - scenario.rho));
            }
        }
    }

    std::vector<double> points{0.0};
    for (double a : anchors) {
        if (!std::isfinite(a)) continue;
        for (double offset : {-kGridOffset, 0.0, kGridOffset}) {
            if (a + offset >= 0.0) points.push_back(a + offset);
        }
    }
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end(), [](double a, double b) { return b - a < 1e-12; }),
                 points.end());
    points.push_back(2.0 * std::max(points.back(), kGridOffset));
    if (points.size() > max_points) {
        throw BudgetExceeded("bid grid has " + std::to_string(points.size()) + " points, limit " +
                             std::to_string(max_points));
    }
    return BidGrid{std::move(points)};
}

std::vector<std::vector<double>> grid_multisets(const BidGrid& grid, std::size_t size) {
    std::vector<std::vector<double>> out;
    if (size == 0) {
        out.emplace_back();
        return out;
    }
    if (grid.points.empty()) return out;
    std::vector<std::size_t> idx(size, 0);
    while (true) {
        std::vector<double> ms;
        ms.reserve(size);
        for (auto i : idx) ms.push_back(grid.points[i]);
        out.push_back(std::move(ms));
        // Next non-decreasing index tuple.
        std::size_t pos = size;
        while (pos > 0 && idx[pos - 1] == grid.points.size() - 1) --pos;
        if (pos == 0) break;
        ++idx[pos - 1];
        for (std::size_t j = pos; j < size; ++j) idx[j] = idx[pos - 1];
    }
    return out;
}

std::vector<std::vector<std::size_t>> bounded_subsets(std::size_t pool, std::size_t max_size) {
    std::vector<std::vector<std::size_t>> out;
    max_size = std::min(max_size, pool);
    for (std::size_t size = 0; size <= max_size; ++size) {
        std::vector<std::size_t> idx(size);
        for (std::size_t j = 0; j < size; ++j) idx[j] = j;
        while (true) {
            out.push_back(idx);
            std::size_t pos = size;
            while (pos > 0 && idx[pos - 1] == pool - size + pos - 1) --pos;
            if (pos == 0) break;
            ++idx[pos - 1];
            for (std::size_t j = pos; j < size; ++j) idx[j] = idx[j - 1] + 1;
        }
    }
    return out;
}

namespace {

    long double binomial(std::size_t n, std::size_t k) {
        if (k > n) return 0.0L;
        long double r = 1.0L;
        for (std::size_t i = 1; i <= k; ++i) r = r * static_cast<long double>(n - k + i) / static_cast<long double>(i);
        return std::round(r);
    }

}  // namespace

std::vector<std::vector<double>> StrategyEnumerator::member_options(std::size_t member) const {
    const double v = coalition_.members[member].true_value;
    std::vector<std::vector<double>> out;
    out.push_back({v});
    out.emplace_back();
    for (std::size_t s = 1; s <= limits_.max_bids_per_member; ++s) {
        for (auto& ms : grid_multisets(grid_, s)) {
            if (s == 1 && ms[0] == v) continue;  // already listed as truthful
            out.push_back(std::move(ms));
        }
    }
    return out;
}

StrategyEnumerator::StrategyEnumerator(const CoalitionSpec& coalition, const BidGrid& grid,
                                       const StrategyLimits& limits, Model model, std::size_t honest_bid_count,
                                       std::optional<std::size_t> block_size)
    : coalition_(coalition),
      grid_(grid),
      limits_(limits),
      model_(model),
      honest_bid_count_(honest_bid_count),
      block_size_(block_size) {
    const long double budget = static_cast<long double>(limits.budget);

    // Guard the option lists before materializing them.
    long double per_member = 2.0L;
    for (std::size_t s = 1; s <= limits.max_bids_per_member; ++s) per_member += binomial(grid.size() + s - 1, s);
    long double fakes = 0.0L;
    for (std::size_t s = 0; s <= limits.max_fake; ++s) fakes += binomial(grid.size() + s - 1, s);
    if (per_member > budget || fakes > budget) {
        throw BudgetExceeded("per-member or fake option list exceeds budget " + std::to_string(limits.budget));
    }
    for (std::size_t m = 0; m < coalition.c(); ++m) options_.push_back(member_options(m));
    for (std::size_t s = 0; s <= limits.max_fake; ++s) {
        auto ms = grid_multisets(grid, s);
        fake_options_.insert(fake_options_.end(), std::make_move_iterator(ms.begin()), std::make_move_iterator(ms.end()));
    }

    // Distribution of the total number of member bids.
    std::vector<long double> by_member_bids{1.0L};
    for (const auto& options : options_) {
        std::vector<long double> next(by_member_bids.size() + limits.max_bids_per_member, 0.0L);
        for (std::size_t have = 0; have < by_member_bids.size(); ++have) {
            if (by_member_bids[have] == 0.0L) continue;
            for (const auto& o : options) next[have + o.size()] += by_member_bids[have];
        }
        by_member_bids = std::move(next);
    }
    const bool chooses_inclusion = model == Model::plain && coalition.has_miner();
    long double total = 0.0L;
    for (std::size_t mb = 0; mb < by_member_bids.size(); ++mb) {
        if (by_member_bids[mb] == 0.0L) continue;
        for (std::size_t f = 0; f <= limits.max_fake; ++f) {
            const long double ways = by_member_bids[mb] * binomial(grid.size() + f - 1, f);
            if (!chooses_inclusion) {
                total += ways;
                continue;
            }
            const std::size_t pool = honest_bid_count + mb + f;
            if (pool > limits.inclusion_pool_cap) {
                throw BudgetExceeded("plain-model inclusion pool of " + std::to_string(pool) + " bids exceeds cap " +
                                     std::to_string(limits.inclusion_pool_cap));
            }
            long double subsets = 0.0L;
            const std::size_t kmax = block_size ? std::min(*block_size, pool) : pool;
            for (std::size_t j = 0; j <= kmax; ++j) subsets += binomial(pool, j);
            total += ways * (1.0L + subsets);
        }
    }
    if (total > budget) {
        throw BudgetExceeded("strategy space of " + std::to_string(static_cast<double>(total)) +
                             " exceeds budget " + std::to_string(limits.budget));
    }
    count_ = static_cast<std::uint64_t>(total);
}

void StrategyEnumerator::for_each(const std::function<bool(const Strategy&)>& visit) const {
    const bool chooses_inclusion = model_ == Model::plain && coalition_.has_miner();
    std::map<std::size_t, std::vector<std::vector<std::size_t>>> subsets_by_pool;

    const std::size_t c = coalition_.c();
    std::vector<std::size_t> digit(c, 0);
    Strategy s;
    s.member_bids.resize(c);
    for (std::size_t f = 0; f < fake_options_.size(); ++f) {
        std::fill(digit.begin(), digit.end(), 0);
        while (true) {
            std::size_t member_total = 0;
            for (std::size_t m = 0; m < c; ++m) {
                s.member_bids[m] = options_[m][digit[m]];
                member_total += s.member_bids[m].size();
            }
            s.fake_bids = fake_options_[f];
            s.inclusion.reset();
            if (!visit(s)) return;
            if (chooses_inclusion) {
                const std::size_t pool = honest_bid_count_ + member_total + s.fake_bids.size();
                auto it = subsets_by_pool.find(pool);
                if (it == subsets_by_pool.end()) {
                    it = subsets_by_pool
                             .emplace(pool, bounded_subsets(pool, block_size_.value_or(pool)))
                             .first;
                }
                for (const auto& subset : it->second) {
                    s.inclusion = subset;
                    if (!visit(s)) return;
                }
            }
            // Mixed-radix increment, member 0 least significant.
            std::size_t m = 0;
            while (m < c && ++digit[m] == options_[m].size()) digit[m++] = 0;
            if (m == c) break;
        }
    }
}

}  // namespace tfm
