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

#include <tfm/mechanisms.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace tfm {

namespace {

    template <class... Ts>
    struct overloaded : Ts... {
        using Ts::operator()...;
    };
    template <class... Ts>
    overloaded(Ts...) -> overloaded<Ts...>;

    void require(bool condition, const std::string& message) {
        if (!condition) throw InvalidParameters(message);
    }

    bool finite_non_negative(double v) { return std::isfinite(v) && v >= 0.0; }

    //! Ceil that ignores floating-point dust above an integer.
    std::size_t integer_ceil(double v) { return static_cast<std::size_t>(std::ceil(v - 1e-9)); }

    //! Indices sorted by amount descending, lower index first on ties.
    std::vector<std::size_t> descending_order(std::span<const double> amounts, std::span<const std::size_t> subset) {
        std::vector<std::size_t> order(subset.begin(), subset.end());
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (amounts[a] != amounts[b]) return amounts[a] > amounts[b];
            return a < b;
        });
        return order;
    }

    std::vector<std::size_t> all_indices(std::size_t n) {
        std::vector<std::size_t> idx(n);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        return idx;
    }

    //! k distinct draws from 0..pool-1, uniformly.
    std::vector<std::size_t> random_subset(std::size_t pool, std::size_t k, std::mt19937_64& rng) {
        std::vector<std::size_t> slots = all_indices(pool);
        k = std::min(k, pool);
        for (std::size_t i = 0; i < k; ++i) {
            std::uniform_int_distribution<std::size_t> pick(i, pool - 1);
            std::swap(slots[i], slots[pick(rng)]);
        }
        slots.resize(k);
        return slots;
    }

    struct ProportionalTerms {
        double x;
        double conditional_payment;
        double miner_transfer;
    };

    ProportionalTerms proportional_terms(const ProportionalParams& p, double threshold, double b) {
        const double x = std::min(b / p.reserve, 1.0);
        const double pay = std::min(b / 2.0, p.reserve / 2.0);
        double transfer = 0.0;
        if (p.model == Model::plain) {
            if (b >= threshold) transfer = threshold / 2.0;
        } else {
            transfer = std::min(pay, threshold / (2.0 * p.miner_fraction));
        }
        return {x, pay, transfer};
    }

    double diluted_miner_rate(const DilutedParams& p) {
        const double c = static_cast<double>(p.collusion_bound);
        return p.preset == DilutedPreset::body ? p.slack / (2.0 * c) : 2.0 * p.slack / c;
    }

    std::vector<std::size_t> candidates(std::span<const double> amounts, std::span<const std::size_t> subset,
                                        double reserve) {
        std::vector<std::size_t> out;
        for (auto i : subset) {
            if (amounts[i] >= reserve) out.push_back(i);
        }
        return out;
    }

    //! Shared evaluator over a subset of bids; for plain rules the subset is
    //! the block, for MPC rules it is the whole vector.
    Outcome evaluate_subset(const MechanismRule& rule, std::span<const double> amounts,
                            std::span<const std::size_t> subset) {
        Outcome out = Outcome::zeros(amounts.size());
        std::visit(overloaded{
                       [&](const PostedPriceParams& p) {
                           const auto cand = candidates(amounts, subset, p.reserve);
                           if (cand.empty()) return;
                           double x = 1.0;
                           if (p.block_size && cand.size() > *p.block_size) {
                               x = static_cast<double>(*p.block_size) / static_cast<double>(cand.size());
                           }
                           for (auto i : cand) {
                               out.x[i] = x;
                               out.p[i] = p.reserve * x;
                           }
                           if (!p.burn) out.mu = out.total_payment();
                       },
                       [&](const ProportionalParams& p) {
                           for (auto i : subset) {
                               const auto t = proportional_terms(p, rule.miner_threshold(), amounts[i]);
                               out.x[i] = t.x;
                               out.p[i] = t.x * t.conditional_payment;
                               out.mu += t.x * t.miner_transfer;
                           }
                       },
                       [&](const DilutedParams& p) {
                           const auto cand = candidates(amounts, subset, p.reserve);
                           if (cand.empty()) return;
                           const double pool = static_cast<double>(std::max(rule.pool_size(), cand.size()));
                           const double x = static_cast<double>(p.block_size) / pool;
                           for (auto i : cand) {
                               out.x[i] = x;
                               out.p[i] = p.reserve * x;
                           }
                           out.mu = x * static_cast<double>(cand.size()) * diluted_miner_rate(p);
                       },
                       [&](const StaircaseParams& p) {
                           auto order = descending_order(amounts, subset);
                           if (order.size() > p.block_size) order.resize(p.block_size);
                           std::vector<double> block;
                           block.reserve(order.size());
                           for (auto i : order) block.push_back(amounts[i]);
                           const auto t = staircase_threshold(block, rule);
                           const double price = rule.ladder()[t];
                           for (std::size_t j = 0; j < t; ++j) {
                               out.x[order[j]] = 1.0;
                               out.p[order[j]] = price;
                           }
                           out.mu = static_cast<double>(t) * p.slack;
                       },
                   },
                   rule.params());
        return out;
    }

}  // namespace

Model MechanismRule::model() const noexcept {
    return std::visit(overloaded{
                          [](const PostedPriceParams& p) { return p.model; },
                          [](const ProportionalParams& p) { return p.model; },
                          [](const DilutedParams&) { return Model::mpc; },
                          [](const StaircaseParams&) { return Model::plain; },
                      },
                      params_);
}

std::optional<std::size_t> MechanismRule::block_size() const noexcept {
    return std::visit(overloaded{
                          [](const PostedPriceParams& p) { return p.block_size; },
                          [](const ProportionalParams&) { return std::optional<std::size_t>{}; },
                          [](const DilutedParams& p) { return std::optional<std::size_t>{p.block_size}; },
                          [](const StaircaseParams& p) { return std::optional<std::size_t>{p.block_size}; },
                      },
                      params_);
}

std::string MechanismRule::name() const {
    if (hybrid_) return "hybrid";
    return std::visit(overloaded{
                          [](const PostedPriceParams& p) -> std::string {
                              if (p.block_size && p.burn && p.model == Model::mpc) return "random_selection";
                              return "posted_price";
                          },
                          [](const ProportionalParams&) -> std::string { return "proportional"; },
                          [](const DilutedParams&) -> std::string { return "diluted"; },
                          [](const StaircaseParams&) -> std::string { return "staircase"; },
                      },
                      params_);
}

bool MechanismRule::randomized() const noexcept {
    return std::visit(overloaded{
                          [](const PostedPriceParams& p) { return p.block_size.has_value(); },
                          [](const ProportionalParams&) { return true; },
                          [](const DilutedParams&) { return true; },
                          [](const StaircaseParams&) { return false; },
                      },
                      params_);
}

std::vector<double> MechanismRule::breakpoints() const {
    return std::visit(overloaded{
                          [](const PostedPriceParams& p) { return std::vector<double>{p.reserve}; },
                          [this](const ProportionalParams& p) {
                              std::vector<double> out{p.reserve, miner_threshold_};
                              if (p.model == Model::mpc) out.push_back(miner_threshold_ / p.miner_fraction);
                              return out;
                          },
                          [](const DilutedParams& p) { return std::vector<double>{p.reserve}; },
                          [this](const StaircaseParams&) { return std::vector<double>(ladder_.begin() + 1, ladder_.end()); },
                      },
                      params_);
}

MechanismRule make_posted_price(const PostedPriceParams& params) {
    require(finite_non_negative(params.reserve), "posted price: reserve must be finite and non-negative");
    require(!params.block_size || *params.block_size >= 1, "posted price: block size must be positive");
    return MechanismRule(params);
}

MechanismRule make_proportional(const ProportionalParams& params) {
    require(std::isfinite(params.slack) && params.slack > 0.0, "proportional: slack must be positive");
    require(std::isfinite(params.reserve) && params.reserve >= 2.0 * params.slack - kTolerance,
            "proportional: reserve must be at least 2 * slack");
    require(params.miner_fraction > 0.0 && params.miner_fraction <= 1.0,
            "proportional: miner fraction must lie in (0, 1]");
    MechanismRule rule(params);
    rule.miner_threshold_ = std::sqrt(2.0 * params.reserve * params.slack);
    return rule;
}

MechanismRule make_diluted(const DilutedParams& params) {
    require(params.block_size >= 1, "diluted: block size must be positive");
    require(params.collusion_bound >= 1, "diluted: collusion bound must be at least 1");
    require(std::isfinite(params.value_cap) && params.value_cap > 0.0, "diluted: value cap must be positive");
    require(std::isfinite(params.slack) && params.slack > 0.0, "diluted: slack must be positive");
    const double c = static_cast<double>(params.collusion_bound);
    const double k = static_cast<double>(params.block_size);
    double pool = 0.0;
    if (params.preset == DilutedPreset::body) {
        require(params.reserve >= params.slack / (2.0 * c) - kTolerance, "diluted: reserve must be at least eps/(2c)");
        pool = 2.0 * c * std::sqrt(k * params.value_cap / params.slack);
    } else {
        require(params.reserve >= 2.0 * params.slack / c - kTolerance,
                "diluted (intro preset): reserve must be at least 2 eps / c");
        pool = c * std::sqrt(k * params.value_cap / (2.0 * params.slack));
    }
    require(std::isfinite(params.reserve), "diluted: reserve must be finite");
    MechanismRule rule(params);
    rule.pool_size_ = std::max(integer_ceil(pool), params.block_size);
    return rule;
}

MechanismRule make_staircase(const StaircaseParams& params) {
    require(params.block_size >= 1, "staircase: block size must be positive");
    require(std::isfinite(params.slack) && params.slack > 0.0, "staircase: slack must be positive");
    require(finite_non_negative(params.value_cap), "staircase: value cap must be finite and non-negative");
    const double steps = std::floor(params.value_cap / params.slack + 1e-9);
    const double k = static_cast<double>(params.block_size);
    const double f0 = steps >= k ? params.value_cap - k * params.slack : params.value_cap - steps * params.slack;
    require(f0 >= -kTolerance, "staircase: F_0 must be non-negative");
    MechanismRule rule(params);
    rule.ladder_.resize(params.block_size + 1);
    for (std::size_t i = 0; i <= params.block_size; ++i) {
        rule.ladder_[i] = std::max(0.0, f0) + static_cast<double>(i) * params.slack;
    }
    return rule;
}

double single_bid_revenue(const MechanismRule& rule, const ValueDistribution& distribution) {
    require(!rule.block_size().has_value(), "single-bid revenue needs an infinite-block rule");
    double total = 0.0;
    const auto& support = distribution.support();
    for (std::size_t i = 0; i < support.size(); ++i) {
        const double b = support[i];
        total += distribution.probabilities()[i] * evaluate(rule, std::span<const double>(&b, 1)).mu;
    }
    return total;
}

MechanismRule make_hybrid(const ValueDistribution& distribution, double epsilon, std::size_t c, std::size_t n) {
    require(std::isfinite(epsilon) && epsilon >= 0.0, "hybrid: epsilon must be finite and non-negative");
    require(c >= 1, "hybrid: c must be at least 1");
    require(n >= 1, "hybrid: n must be at least 1");
    const double m = distribution.median();
    const double users = static_cast<double>(n);

    HybridInfo info;
    info.epsilon = epsilon;
    info.collusion_bound = c;
    info.users = n;
    info.distribution = distribution;
    info.proportional_slack = 4.0 * epsilon / (5.0 * static_cast<double>(c));

    auto posted = make_posted_price(PostedPriceParams{std::min(epsilon / static_cast<double>(c), m), false,
                                                      std::nullopt, Model::plain});
    info.posted_revenue = users * single_bid_revenue(posted, distribution);

    if (info.proportional_slack <= 0.0) {
        info.fallback_reason = "epsilon is zero";
    } else if (m < 2.0 * info.proportional_slack) {
        info.fallback_reason = "median below twice the proportional slack";
    } else {
        auto proportional =
            make_proportional(ProportionalParams{m, info.proportional_slack, 1.0, Model::plain});
        info.proportional_revenue = users * single_bid_revenue(proportional, distribution);
        if (*info.proportional_revenue > info.posted_revenue) {
            info.branch = HybridInfo::Branch::proportional;
            proportional.hybrid_ = std::move(info);
            return proportional;
        }
    }
    info.branch = HybridInfo::Branch::posted_price;
    posted.hybrid_ = std::move(info);
    return posted;
}

std::size_t staircase_threshold(std::span<const double> sorted_block, const MechanismRule& rule) {
    const auto& params = rule.as<StaircaseParams>();
    require(sorted_block.size() <= params.block_size, "staircase: block larger than k");
    require(std::is_sorted(sorted_block.begin(), sorted_block.end(), std::greater<>{}),
            "staircase: block must be sorted in descending order");
    std::size_t t = 0;
    for (std::size_t i = 1; i <= sorted_block.size(); ++i) {
        if (sorted_block[i - 1] >= rule.ladder()[i]) t = i;
    }
    return t;
}

Outcome evaluate(const MechanismRule& rule, const BidVector& bids) {
    const auto amounts = bids.amounts();
    return evaluate(rule, std::span<const double>(amounts));
}

Outcome evaluate(const MechanismRule& rule, std::span<const double> amounts) {
    const auto everything = all_indices(amounts.size());
    return evaluate_subset(rule, amounts, everything);
}

Outcome evaluate_with_inclusion(const MechanismRule& rule, std::span<const double> amounts,
                                std::span<const std::size_t> included) {
    require(rule.model() == Model::plain, "inclusion choice exists only in the plain model");
    const auto k = rule.block_size();
    require(!k || included.size() <= *k, "inclusion exceeds the block size");
    std::vector<bool> seen(amounts.size(), false);
    for (auto i : included) {
        require(i < amounts.size(), "inclusion references a missing bid");
        require(!seen[i], "inclusion lists a bid twice");
        seen[i] = true;
    }
    return evaluate_subset(rule, amounts, included);
}

Realization sample_outcome(const MechanismRule& rule, const BidVector& bids, std::uint64_t seed) {
    const auto amounts = bids.amounts();
    return sample_outcome(rule, std::span<const double>(amounts), seed);
}

Realization sample_outcome(const MechanismRule& rule, std::span<const double> amounts, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto n = amounts.size();
    Realization out{std::vector<bool>(n, false), std::vector<double>(n, 0.0), 0.0};
    const auto everything = all_indices(n);
    std::visit(overloaded{
                   [&](const PostedPriceParams& p) {
                       auto cand = candidates(amounts, everything, p.reserve);
                       if (p.block_size && cand.size() > *p.block_size) {
                           const auto picked = random_subset(cand.size(), *p.block_size, rng);
                           std::vector<std::size_t> chosen;
                           for (auto s : picked) chosen.push_back(cand[s]);
                           cand = std::move(chosen);
                       }
                       for (auto i : cand) {
                           out.confirmed[i] = true;
                           out.payment[i] = p.reserve;
                           if (!p.burn) out.miner_revenue += p.reserve;
                       }
                   },
                   [&](const ProportionalParams& p) {
                       std::uniform_real_distribution<double> unit(0.0, 1.0);
                       for (std::size_t i = 0; i < n; ++i) {
                           const auto t = proportional_terms(p, rule.miner_threshold(), amounts[i]);
                           if (unit(rng) < t.x) {
                               out.confirmed[i] = true;
                               out.payment[i] = t.conditional_payment;
                               out.miner_revenue += t.miner_transfer;
                           }
                       }
                   },
                   [&](const DilutedParams& p) {
                       const auto cand = candidates(amounts, everything, p.reserve);
                       const auto pool = std::max(rule.pool_size(), cand.size());
                       for (auto slot : random_subset(pool, p.block_size, rng)) {
                           if (slot >= cand.size()) continue;  // padding zero
                           out.confirmed[cand[slot]] = true;
                           out.payment[cand[slot]] = p.reserve;
                           out.miner_revenue += diluted_miner_rate(p);
                       }
                   },
                   [&](const StaircaseParams&) {
                       const auto exact = evaluate_subset(rule, amounts, everything);
                       for (std::size_t i = 0; i < n; ++i) {
                           out.confirmed[i] = exact.x[i] > 0.0;
                           out.payment[i] = exact.p[i];
                       }
                       out.miner_revenue = exact.mu;
                   },
               },
               rule.params());
    return out;
}

nlohmann::json to_json(const ValueDistribution& distribution) {
    return nlohmann::json{{"support", distribution.support()}, {"probabilities", distribution.probabilities()}};
}

ValueDistribution distribution_from_json(const nlohmann::json& document) {
    auto support = document.at("support").get<std::vector<double>>();
    if (!document.contains("probabilities")) return ValueDistribution::uniform(std::move(support));
    return ValueDistribution(std::move(support), document.at("probabilities").get<std::vector<double>>());
}

nlohmann::json to_json(const MechanismRule& rule) {
    if (const auto& h = rule.hybrid()) {
        return nlohmann::json{{"mechanism", "hybrid"},
                              {"epsilon", h->epsilon},
                              {"c", h->collusion_bound},
                              {"n", h->users},
                              {"distribution", to_json(h->distribution)},
                              {"model", "plain"}};
    }
    return std::visit(overloaded{
                          [](const PostedPriceParams& p) {
                              nlohmann::json j{{"mechanism", "posted_price"},
                                               {"r", p.reserve},
                                               {"burn", p.burn},
                                               {"model", to_string(p.model)}};
                              j["k"] = p.block_size ? nlohmann::json(*p.block_size) : nlohmann::json(nullptr);
                              return j;
                          },
                          [](const ProportionalParams& p) {
                              return nlohmann::json{{"mechanism", "proportional"},
                                                    {"r", p.reserve},
                                                    {"epsilon", p.slack},
                                                    {"rho", p.miner_fraction},
                                                    {"model", to_string(p.model)}};
                          },
                          [](const DilutedParams& p) {
                              return nlohmann::json{{"mechanism", "diluted"},
                                                    {"k", p.block_size},
                                                    {"c", p.collusion_bound},
                                                    {"M", p.value_cap},
                                                    {"epsilon", p.slack},
                                                    {"r", p.reserve},
                                                    {"preset", p.preset == DilutedPreset::body ? "body" : "intro"},
                                                    {"model", "mpc"}};
                          },
                          [](const StaircaseParams& p) {
                              return nlohmann::json{{"mechanism", "staircase"},
                                                    {"M", p.value_cap},
                                                    {"k", p.block_size},
                                                    {"epsilon", p.slack},
                                                    {"model", "plain"}};
                          },
                      },
                      rule.params());
}

MechanismRule rule_from_json(const nlohmann::json& document) {
    try {
        const auto kind = document.at("mechanism").get<std::string>();
        const auto model = [&](Model fallback) {
            return document.contains("model") ? model_from_string(document.at("model").get<std::string>()) : fallback;
        };
        const auto block = [&]() -> std::optional<std::size_t> {
            if (!document.contains("k") || document.at("k").is_null()) return std::nullopt;
            return document.at("k").get<std::size_t>();
        };
        if (kind == "posted_price" || kind == "random_selection") {
            PostedPriceParams p;
            p.reserve = document.at("r").get<double>();
            p.burn = document.value("burn", true);
            p.block_size = block();
            p.model = model(Model::mpc);
            if (kind == "random_selection") {
                require(p.block_size.has_value() && p.burn && p.model == Model::mpc,
                        "random_selection needs a finite k, burning and the mpc model");
            }
            return make_posted_price(p);
        }
        if (kind == "proportional") {
            ProportionalParams p;
            p.reserve = document.at("r").get<double>();
            p.slack = document.at("epsilon").get<double>();
            p.miner_fraction = document.value("rho", 1.0);
            p.model = model(Model::plain);
            return make_proportional(p);
        }
        if (kind == "diluted") {
            require(model(Model::mpc) == Model::mpc, "diluted is an mpc-model mechanism");
            DilutedParams p;
            p.block_size = document.at("k").get<std::size_t>();
            p.collusion_bound = document.value("c", std::size_t{1});
            p.value_cap = document.at("M").get<double>();
            p.slack = document.at("epsilon").get<double>();
            p.reserve = document.at("r").get<double>();
            const auto preset = document.value("preset", std::string("body"));
            require(preset == "body" || preset == "intro", "diluted preset must be body or intro");
            p.preset = preset == "body" ? DilutedPreset::body : DilutedPreset::intro;
            return make_diluted(p);
        }
        if (kind == "staircase") {
            require(model(Model::plain) == Model::plain, "staircase is a plain-model mechanism");
            return make_staircase(StaircaseParams{document.at("M").get<double>(), document.at("k").get<std::size_t>(),
                                                  document.at("epsilon").get<double>()});
        }
        if (kind == "hybrid") {
            return make_hybrid(distribution_from_json(document.at("distribution")), document.at("epsilon").get<double>(),
                               document.value("c", std::size_t{1}), document.at("n").get<std::size_t>());
        }
        throw InvalidParameters("unknown mechanism: " + kind);
    } catch (const nlohmann::json::exception& e) {
        throw InvalidParameters(std::string("mechanism JSON: ") + e.what());
    }
}

}  // namespace tfm
