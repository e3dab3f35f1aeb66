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

#include <tfm/cli.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <vector>

#include <CLI11.hpp>

#include <tfm/audit.hpp>
#include <tfm/mechanisms.hpp>
#include <tfm/mpcsim/protocol.hpp>

namespace tfm::cli {

using nlohmann::json;

namespace {

std::string fmt(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Files are buffered and written together once every computation succeeded.
class OutputSet {
  public:
    void add(std::string name, std::string contents) { files_.emplace(std::move(name), std::move(contents)); }
    void add_json(std::string name, const json& document) { add(std::move(name), document.dump(2) + "\n"); }
    void write(const std::filesystem::path& dir) const {
        std::filesystem::create_directories(dir);
        for (const auto& [name, contents] : files_) {
            std::ofstream out(dir / name, std::ios::binary);
            if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
            out << contents;
        }
    }

  private:
    std::map<std::string, std::string> files_;
};

std::uint64_t seed_of(const json& config, const Options& options) {
    return options.seed.value_or(config.value("seed", std::uint64_t{0}));
}

StrategyLimits limits_from(const json& config) {
    StrategyLimits limits;
    if (!config.contains("limits")) return limits;
    const auto& l = config.at("limits");
    limits.max_fake = l.value("max_fake", limits.max_fake);
    limits.max_bids_per_member = l.value("max_bids_per_member", limits.max_bids_per_member);
    limits.inclusion_pool_cap = l.value("inclusion_pool_cap", limits.inclusion_pool_cap);
    limits.budget = static_cast<std::uint64_t>(l.value("budget", static_cast<double>(limits.budget)));
    return limits;
}

std::vector<ExPostScenario> scenarios_for(const json& source, std::size_t c) {
    std::vector<ExPostScenario> out;
    for (const auto& s : source) {
        ExPostScenario sc;
        sc.honest_bids = s.value("honest_bids", std::vector<double>{});
        const auto values = s.value("member_values", std::vector<double>{});
        if (values.size() < c) throw InvalidParameters("scenario lists fewer member values than the coalition size");
        sc.member_values.assign(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(c));
        out.push_back(std::move(sc));
    }
    if (out.empty()) throw InvalidParameters("ex post target needs at least one scenario");
    return out;
}

AuditReport run_target(const MechanismRule& rule, const json& config, const json& target, std::uint64_t seed) {
    const Property property = property_from_string(target.at("property").get<std::string>());
    const std::string setting = target.value("setting", std::string("ex_post"));
    const std::size_t c = target.value("c", property == Property::mic ? std::size_t{0} : std::size_t{1});
    const double rho = target.value("rho", property == Property::uic ? 0.0 : 1.0);
    const double epsilon = target.at("epsilon").get<double>();
    const auto limits = limits_from(config);
    const std::size_t max_grid = config.value("max_grid_points", std::size_t{64});
    check_coalition(property, rule.model(), rho, c);

    if (setting == "ex_post") {
        const auto& source = target.contains("scenarios") ? target.at("scenarios") : config.at("scenarios");
        const auto scenarios = scenarios_for(source, c);
        return audit_ex_post(rule, property, rho, scenarios, epsilon, limits, max_grid);
    }
    if (setting == "bayesian") {
        const auto distribution = distribution_from_json(config.at("distribution"));
        const std::size_t n = target.value("n", config.at("n").get<std::size_t>());
        const auto values = target.value("member_values", std::vector<double>{});
        if (values.size() != c) throw InvalidParameters("bayesian target needs one member value per member");
        CoalitionSpec coalition{rho, {}};
        for (std::size_t i = 0; i < c; ++i) coalition.members.push_back(CoalitionMember{i, values[i]});
        BayesianOptions options;
        if (target.contains("monte_carlo")) {
            options.monte_carlo =
                MonteCarlo{target.at("monte_carlo").value("samples", std::size_t{100000}), seed};
        }
        return audit_bayesian(rule, property, coalition, distribution, n, epsilon, limits, options, std::nullopt,
                              max_grid);
    }
    throw InvalidParameters("unknown setting: " + setting);
}

// Slack sum fed to the revenue ceiling: design slacks when the rule claims
// them, else the sweep value.
double ceiling_slack(const MechanismRule& rule, double rho, std::size_t c, double sweep_epsilon) {
    const auto slack = design_slack(rule, rho, c);
    if (!slack.uic && !slack.mic && !slack.scp) return sweep_epsilon;
    return slack.uic.value_or(0.0) + slack.mic.value_or(0.0) + slack.scp.value_or(0.0);
}

std::vector<std::vector<double>> value_vectors_from(const json& config, std::uint64_t seed) {
    std::vector<std::vector<double>> out;
    if (config.contains("value_vectors")) {
        for (const auto& v : config.at("value_vectors")) out.push_back(v.get<std::vector<double>>());
        return out;
    }
    const auto distribution = distribution_from_json(config.at("distribution"));
    const auto n = config.at("n").get<std::size_t>();
    const auto samples = config.value("samples", std::size_t{100});
    std::mt19937_64 rng(seed);
    std::discrete_distribution<std::size_t> pick(distribution.probabilities().begin(),
                                                 distribution.probabilities().end());
    for (std::size_t s = 0; s < samples; ++s) {
        std::vector<double> values(n);
        for (auto& v : values) v = distribution.support()[pick(rng)];
        out.push_back(std::move(values));
    }
    return out;
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InvalidParameters("cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw InvalidParameters(std::string("config parse error: ") + e.what());
    }
}

}  // namespace

int cmd_audit(const json& config, const Options& options) {
    const auto rule = rule_from_json(config.at("mechanism"));
    const auto seed = seed_of(config, options);
    const auto targets = config.value("targets", json::array());
    OutputSet files;
    std::ostringstream csv;
    csv << "mechanism,property,setting,rho,c,epsilon_target,gain,pass\n";
    bool all_pass = true;
    for (std::size_t i = 0; i < targets.size(); ++i) {
        AuditReport report;
        try {
            report = run_target(rule, config, targets[i], seed);
        } catch (const BudgetExceeded& e) {
            throw BudgetExceeded("target " + std::to_string(i) + " (" + targets[i].dump() + "): " + e.what());
        }
        all_pass = all_pass && report.pass;
        files.add_json("report_" + std::to_string(i) + ".json", to_json(report));
        csv << rule.name() << ',' << to_string(report.property) << ',' << to_string(report.setting) << ','
            << fmt(report.rho) << ',' << report.c << ',' << fmt(report.epsilon) << ',' << fmt(report.gain) << ','
            << (report.pass ? "true" : "false") << '\n';
    }
    files.add("summary.csv", csv.str());
    files.write(options.out);
    return all_pass ? kExitOk : kExitCheckFailed;
}

int cmd_revenue_curve(const json& config, const Options& options) {
    const json mechanism = config.at("mechanism");
    const auto distribution = distribution_from_json(config.at("distribution"));
    const auto n = config.at("n").get<std::size_t>();
    const double rho = config.value("rho", 1.0);
    const std::size_t c = config.value("c", std::size_t{1});
    const bool by_scale = config.contains("scales");

    struct Row {
        double scale;
        double epsilon;
    };
    std::vector<Row> rows;
    if (by_scale) {
        const double eps = mechanism.value("epsilon", 0.0);
        for (double s : config.at("scales").get<std::vector<double>>()) rows.push_back({s, eps});
    } else {
        auto eps = config.at("epsilons").get<std::vector<double>>();
        std::sort(eps.begin(), eps.end());
        for (double e : eps) rows.push_back({1.0, e});
    }

    std::ostringstream csv;
    csv << (by_scale ? "scale," : "") << "epsilon,exact_E_mu,ceiling_rhs,ratio\n";
    bool ok = true;
    for (const auto& row : rows) {
        const auto dist = distribution.scaled(row.scale);
        json doc = mechanism;
        if (doc.contains("epsilon") || doc.at("mechanism") == "hybrid") doc["epsilon"] = row.epsilon;
        if (doc.at("mechanism") == "hybrid") {
            doc["distribution"] = to_json(dist);
            doc["n"] = n;
        }
        const auto rule = rule_from_json(doc);
        const double mu = expected_revenue(rule, dist, n);
        const double rhs = revenue_ceiling(dist, n, rho, ceiling_slack(rule, rho, c, row.epsilon));
        double ratio = 0.0;
        if (rhs > 0.0) ratio = mu / rhs;
        else if (mu > kAuditTolerance) ratio = std::numeric_limits<double>::infinity();
        ok = ok && mu <= rhs + kAuditTolerance;
        if (by_scale) csv << fmt(row.scale) << ',';
        csv << fmt(row.epsilon) << ',' << fmt(mu) << ',' << fmt(rhs) << ',' << fmt(ratio) << '\n';
    }
    OutputSet files;
    files.add("revenue_curve.csv", csv.str());
    files.write(options.out);
    return ok ? kExitOk : kExitCheckFailed;
}

int cmd_welfare(const json& config, const Options& options) {
    const auto rule = rule_from_json(config.at("mechanism"));
    const auto vectors = value_vectors_from(config, seed_of(config, options));
    std::ostringstream csv;
    csv << "index,n,social_welfare,miner_revenue,expected_confirmed\n";
    for (std::size_t i = 0; i < vectors.size(); ++i) {
        const auto o = evaluate(rule, vectors[i]);
        double confirmed = 0.0;
        for (double x : o.x) confirmed += x;
        csv << i << ',' << vectors[i].size() << ',' << fmt(social_welfare(o, vectors[i])) << ',' << fmt(o.mu) << ','
            << fmt(confirmed) << '\n';
    }
    json summary{{"mechanism", to_json(rule)}, {"vectors", vectors.size()}};
    bool ok = true;
    if (config.contains("ceiling")) {
        const auto& cfg = config.at("ceiling");
        const auto w = check_welfare_ceiling(rule, vectors, cfg.at("k").get<std::size_t>(), cfg.at("M").get<double>(),
                                             cfg.at("epsilon").get<double>());
        summary["ceiling"] = json{{"miner_rev_bound", w.miner_rev_bound},     {"per_user_bound", w.per_user_bound},
                                  {"welfare_bound", w.welfare_bound},         {"worst_miner_ratio", w.worst_miner_ratio},
                                  {"worst_user_ratio", w.worst_user_ratio},   {"worst_welfare_ratio", w.worst_welfare_ratio},
                                  {"pass", w.pass}};
        ok = w.pass;
    }
    OutputSet files;
    files.add("welfare.csv", csv.str());
    files.add_json("welfare.json", summary);
    files.write(options.out);
    return ok ? kExitOk : kExitCheckFailed;
}

int cmd_mpc_sim(const json& config, const Options& options) {
    auto protocol = mpcsim::protocol_config_from_json(config);
    protocol.seed = seed_of(config, options);
    OutputSet files;
    if (config.value("efficient", false)) {
        const auto run = mpcsim::run_efficient_instantiation(protocol);
        json messages = json::array();
        for (const auto& msg : run.transcript.messages) messages.push_back(mpcsim::to_json(msg));
        files.add_json("trace.json", json{{"config", mpcsim::to_json(protocol)},
                                          {"messages", messages},
                                          {"notes", run.transcript.notes}});
        files.add_json("outcome.json", json{{"identities", run.identities},
                                            {"bids", run.bids},
                                            {"seed", run.seed},
                                            {"x", run.expected.x},
                                            {"p", run.expected.p},
                                            {"mu", run.expected.mu},
                                            {"confirmed", run.realized.confirmed},
                                            {"payment", run.realized.payment},
                                            {"miner_revenue", run.realized.miner_revenue}});
        files.write(options.out);
        return kExitOk;
    }
    const auto run = mpcsim::run_pi_mpc(protocol);
    const auto diff = mpcsim::ideal_diff(run.outcome, mpcsim::ideal_outcome(protocol));
    const bool honest_agree = std::all_of(run.honest_outputs.begin(), run.honest_outputs.end(),
                                          [&](const mpcsim::ProtocolOutcome& o) { return o == run.outcome; });
    json outcome = mpcsim::to_json(run.outcome);
    outcome["mode"] = mpcsim::to_string(protocol.mode);
    outcome["agreed"] = run.transcript.agreed;
    outcome["misbehaving"] = run.transcript.misbehaving;
    outcome["honest_miners_agree"] = honest_agree;
    outcome["ideal_diff"] = diff;
    files.add_json("trace.json", mpcsim::trace_to_json(protocol, run));
    files.add_json("outcome.json", outcome);
    files.write(options.out);
    return diff.empty() && honest_agree ? kExitOk : kExitCheckFailed;
}

int cmd_replay(const json& trace, const Options& options) {
    const auto res = mpcsim::replay(trace);
    OutputSet files;
    files.add_json("replay.json", json{{"messages_match", res.messages_match},
                                       {"outcome_match", res.outcome_match},
                                       {"outcome", mpcsim::to_json(res.run.outcome)}});
    files.write(options.out);
    return res.messages_match && res.outcome_match ? kExitOk : kExitCheckFailed;
}

int run(int argc, char** argv) {
    CLI::App app{"Transaction fee mechanism lab: audits, bound checks and MPC protocol simulation"};
    app.require_subcommand(1);
    std::string config_path;
    Options options;
    std::string out_dir = ".";
    std::uint64_t seed = 0;

    const std::vector<std::pair<std::string, std::string>> commands{
        {"audit", "Audit incentive-compatibility targets"},
        {"revenue-curve", "Exact expected miner revenue against the revenue ceiling"},
        {"welfare", "Truthful social welfare and welfare ceilings"},
        {"mpc-sim", "Simulate the MPC protocol and compare with the ideal functionality"},
        {"replay", "Re-execute a protocol trace (--config is the trace file)"},
    };
    std::vector<CLI::App*> subs;
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", config_path, "JSON config path")->required();
        sub->add_option("--out", out_dir, "Output directory");
        sub->add_option("--seed", seed, "Seed overriding the config");
        subs.push_back(sub);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitConfigError;
    }
    options.out = out_dir;
    for (auto* sub : subs)
        if (sub->parsed() && sub->count("--seed") > 0) options.seed = seed;

    try {
        const json config = load_json(config_path);
        if (subs[0]->parsed()) return cmd_audit(config, options);
        if (subs[1]->parsed()) return cmd_revenue_curve(config, options);
        if (subs[2]->parsed()) return cmd_welfare(config, options);
        if (subs[3]->parsed()) return cmd_mpc_sim(config, options);
        return cmd_replay(config, options);
    } catch (const BudgetExceeded& e) {
        std::cerr << "budget exceeded: " << e.what() << '\n';
        return kExitBudgetExceeded;
    } catch (const InvalidParameters& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitConfigError;
    } catch (const json::exception& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kExitConfigError;
    }
}

}  // namespace tfm::cli
