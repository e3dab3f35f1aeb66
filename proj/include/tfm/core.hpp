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
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace tfm {

// Absolute tolerance for currency comparisons.
inline constexpr double kTolerance = 1e-9;

class InvalidParameters : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

class BudgetExceeded : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

enum class Model { plain, mpc };

const char* to_string(Model model) noexcept;
Model model_from_string(const std::string& name);

struct Bid {
    std::string identity;
    double amount{0.0};
};

//! Ordered bids with distinct identities. The number of bids may differ from
//! the number of users: strategic players inject or withhold bids.
class BidVector {
  public:
    BidVector() = default;
    explicit BidVector(std::vector<Bid> bids);

    //! Labels bids "b0", "b1", ... in order.
    static BidVector from_amounts(std::span<const double> amounts);

    [[nodiscard]] std::size_t size() const noexcept { return bids_.size(); }
    [[nodiscard]] bool empty() const noexcept { return bids_.empty(); }
    [[nodiscard]] const Bid& operator[](std::size_t i) const { return bids_[i]; }
    [[nodiscard]] auto begin() const noexcept { return bids_.begin(); }
    [[nodiscard]] auto end() const noexcept { return bids_.end(); }
    [[nodiscard]] std::vector<double> amounts() const;

  private:
    std::vector<Bid> bids_;
};

//! Finite discrete value distribution.
class ValueDistribution {
  public:
    ValueDistribution(std::vector<double> support, std::vector<double> probabilities);

    static ValueDistribution point_mass(double value);
    static ValueDistribution uniform(std::vector<double> support);

    [[nodiscard]] const std::vector<double>& support() const noexcept { return support_; }
    [[nodiscard]] const std::vector<double>& probabilities() const noexcept { return probabilities_; }
    //! Smallest support point whose CDF reaches 1/2.
    [[nodiscard]] double median() const noexcept { return median_; }
    //! E[sqrt(X)].
    [[nodiscard]] double sqrt_moment() const noexcept { return sqrt_moment_; }
    [[nodiscard]] double max() const noexcept { return support_.back(); }
    //! Pr[X >= threshold].
    [[nodiscard]] double tail(double threshold) const noexcept;
    [[nodiscard]] ValueDistribution scaled(double factor) const;

  private:
    std::vector<double> support_;
    std::vector<double> probabilities_;
    double median_{0.0};
    double sqrt_moment_{0.0};
};

//! Exact expected outcome of a mechanism on one bid vector: confirmation
//! probabilities, expected payments and expected total miner revenue.
struct Outcome {
    std::vector<double> x;
    std::vector<double> p;
    double mu{0.0};

    static Outcome zeros(std::size_t n) { return Outcome{std::vector<double>(n, 0.0), std::vector<double>(n, 0.0), 0.0}; }

    [[nodiscard]] std::size_t size() const noexcept { return x.size(); }
    //! Payment conditioned on confirmation, p_i / x_i; empty when x_i == 0.
    [[nodiscard]] std::optional<double> conditional_payment(std::size_t i) const;
    [[nodiscard]] double total_payment() const noexcept;

    friend bool operator==(const Outcome&, const Outcome&) = default;
};

//! A single draw of a randomized mechanism.
struct Realization {
    std::vector<bool> confirmed;
    std::vector<double> payment;
    double miner_revenue{0.0};

    [[nodiscard]] std::size_t confirmed_count() const noexcept;

    friend bool operator==(const Realization&, const Realization&) = default;
};

//! Checks the Outcome invariants against the bid amounts it was computed for.
//! Returns a description of the first violation, or nothing.
std::optional<std::string> check_outcome(const Outcome& outcome, std::span<const double> amounts,
                                         double tolerance = kTolerance);

//! v * x - p.
double user_utility(double true_value, double x, double p);

//! Bids owned by one colluding user. `real_bid` carries the user's transaction;
//! `extra_bids` are additional bids the user paid for but does not value.
struct MemberBids {
    std::optional<std::size_t> real_bid;
    std::vector<std::size_t> extra_bids;
    double true_value{0.0};
};

//! Ownership of bids in an evaluated bid vector by a coalition.
struct CoalitionAccounting {
    Model model{Model::mpc};
    //! Fraction of miners in the coalition. Plain model counts the whole
    //! miner revenue whenever rho > 0.
    double rho{0.0};
    std::vector<MemberBids> members;
    std::vector<std::size_t> fake_bids;
};

//! Sum of member utilities, minus payments of coalition-owned fake bids,
//! plus the coalition's share of miner revenue.
double coalition_utility(const Outcome& outcome, const CoalitionAccounting& coalition);

//! Sum over real users of v_i x_i - p_i, plus miner revenue. `true_values`
//! lines up with the first true_values.size() bids; remaining bids are fake.
double social_welfare(const Outcome& outcome, std::span<const double> true_values);

}  // namespace tfm
