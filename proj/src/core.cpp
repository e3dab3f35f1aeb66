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

#include <tfm/core.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace tfm {

const char* to_string(Model model) noexcept { return model == Model::plain ? "plain" : "mpc"; }

Model model_from_string(const std::string& name) {
    if (name == "plain") return Model::plain;
    if (name == "mpc" || name == "mpc-assisted") return Model::mpc;
    throw InvalidParameters("unknown model: " + name);
}

BidVector::BidVector(std::vector<Bid> bids) : bids_(std::move(bids)) {
    std::unordered_set<std::string> seen;
    for (const auto& bid : bids_) {
        if (!std::isfinite(bid.amount) || bid.amount < 0.0) {
            throw InvalidParameters("bid amount must be finite and non-negative");
        }
        if (!seen.insert(bid.identity).second) {
            throw InvalidParameters("duplicate bid identity: " + bid.identity);
        }
    }
}

BidVector BidVector::from_amounts(std::span<const double> amounts) {
    std::vector<Bid> bids;
    bids.reserve(amounts.size());
    for (std::size_t i = 0; i < amounts.size(); ++i) {
        bids.push_back(Bid{"b" + std::to_string(i), amounts[i]});
    }
    return BidVector(std::move(bids));
}

std::vector<double> BidVector::amounts() const {
    std::vector<double> out;
    out.reserve(bids_.size());
    for (const auto& bid : bids_) out.push_back(bid.amount);
    return out;
}

ValueDistribution::ValueDistribution(std::vector<double> support, std::vector<double> probabilities)
    : support_(std::move(support)), probabilities_(std::move(probabilities)) {
    if (support_.empty() || support_.size() != probabilities_.size()) {
        throw InvalidParameters("distribution support and probabilities must be non-empty and of equal length");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) {
        if (!std::isfinite(support_[i]) || support_[i] < 0.0) {
            throw InvalidParameters("distribution support must be finite and non-negative");
        }
        if (i > 0 && !(support_[i] > support_[i - 1])) {
            throw InvalidParameters("distribution support must be strictly ascending");
        }
        if (!(probabilities_[i] >= 0.0)) throw InvalidParameters("negative probability");
        total += probabilities_[i];
    }
    if (std::abs(total - 1.0) > 1e-12) throw InvalidParameters("probabilities must sum to 1");

    double cdf = 0.0;
    median_ = support_.back();
    for (std::size_t i = 0; i < support_.size(); ++i) {
        cdf += probabilities_[i];
        if (cdf >= 0.5 - 1e-12) {
            median_ = support_[i];
            break;
        }
    }
    for (std::size_t i = 0; i < support_.size(); ++i) sqrt_moment_ += probabilities_[i] * std::sqrt(support_[i]);
}

ValueDistribution ValueDistribution::point_mass(double value) { return ValueDistribution({value}, {1.0}); }

ValueDistribution ValueDistribution::uniform(std::vector<double> support) {
    const auto n = support.size();
    if (n == 0) throw InvalidParameters("uniform distribution needs a support point");
    std::vector<double> probabilities(n, 1.0 / static_cast<double>(n));
    // Put the rounding residue on the last point so the sum is exactly 1.
    probabilities.back() = 1.0 - std::accumulate(probabilities.begin(), probabilities.end() - 1, 0.0);
    return ValueDistribution(std::move(support), std::move(probabilities));
}

double ValueDistribution::tail(double threshold) const noexcept {
    double mass = 0.0;
    for (std::size_t i = 0; i < support_.size(); ++i) {
        if (support_[i] >= threshold) mass += probabilities_[i];
    }
    return mass;
}

ValueDistribution ValueDistribution::scaled(double factor) const {
    if (!(factor > 0.0)) throw InvalidParameters("scale factor must be positive");
    std::vector<double> support = support_;
    for (auto& v : support) v *= factor;
    return ValueDistribution(std::move(support), probabilities_);
}

std::optional<double> Outcome::conditional_payment(std::size_t i) const {
    if (x.at(i) <= 0.0) return std::nullopt;
    return p[i] / x[i];
}

double Outcome::total_payment() const noexcept { return std::accumulate(p.begin(), p.end(), 0.0); }

std::size_t Realization::confirmed_count() const noexcept {
    return static_cast<std::size_t>(std::count(confirmed.begin(), confirmed.end(), true));
}

std::optional<std::string> check_outcome(const Outcome& outcome, std::span<const double> amounts, double tolerance) {
    if (outcome.x.size() != amounts.size() || outcome.p.size() != amounts.size()) {
        return "outcome length differs from bid count";
    }
    double total = 0.0;
    for (std::size_t i = 0; i < amounts.size(); ++i) {
        const double x = outcome.x[i];
        if (!(x >= -tolerance && x <= 1.0 + tolerance)) return "x[" + std::to_string(i) + "] outside [0,1]";
        if (outcome.p[i] > amounts[i] * x + tolerance) return "p[" + std::to_string(i) + "] exceeds b*x";
        total += outcome.p[i];
    }
    if (outcome.mu > total + tolerance) return "miner revenue exceeds total payment";
    return std::nullopt;
}

double user_utility(double true_value, double x, double p) { return true_value * x - p; }

namespace {

    void check_index(std::size_t index, const Outcome& outcome) {
        if (index >= outcome.size()) {
            throw InvalidParameters("coalition references bid " + std::to_string(index) + " of " +
                                    std::to_string(outcome.size()));
        }
    }

}  // namespace

double coalition_utility(const Outcome& outcome, const CoalitionAccounting& coalition) {
    double total = 0.0;
    for (const auto& member : coalition.members) {
        if (member.real_bid) {
            check_index(*member.real_bid, outcome);
            total += user_utility(member.true_value, outcome.x[*member.real_bid], outcome.p[*member.real_bid]);
        }
        for (auto j : member.extra_bids) {
            check_index(j, outcome);
            total -= outcome.p[j];
        }
    }
    for (auto j : coalition.fake_bids) {
        check_index(j, outcome);
        total -= outcome.p[j];
    }
    if (coalition.model == Model::mpc) {
        total += coalition.rho * outcome.mu;
    } else if (coalition.rho > 0.0) {
        total += outcome.mu;
    }
    return total;
}

double social_welfare(const Outcome& outcome, std::span<const double> true_values) {
    if (true_values.size() > outcome.size()) throw InvalidParameters("more true values than bids");
    double total = outcome.mu;
    for (std::size_t i = 0; i < true_values.size(); ++i) {
        total += user_utility(true_values[i], outcome.x[i], outcome.p[i]);
    }
    for (std::size_t i = true_values.size(); i < outcome.size(); ++i) total -= outcome.p[i];
    return total;
}

}  // namespace tfm
