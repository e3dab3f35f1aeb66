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

#include <tfm/mpcsim/protocol.hpp>

#include <algorithm>
#include <array>
#include <map>
#include <random>
#include <set>
#include <string_view>
#include <utility>

namespace tfm::mpcsim {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<IdentityScript, const char*>, 9> kIdentityScripts{{
    {IdentityScript::honest, "honest"},
    {IdentityScript::withhold_commitment, "withhold-commitment"},
    {IdentityScript::inconsistent_sharing, "inconsistent-sharing"},
    {IdentityScript::withhold_share, "withhold-share"},
    {IdentityScript::bad_opening, "bad-opening"},
    {IdentityScript::withhold_complaint_response, "withhold-complaint-response"},
    {IdentityScript::equivocate, "equivocate"},
    {IdentityScript::copy_commitment, "copy-commitment"},
    {IdentityScript::partial_announce, "partial-announce"},
}};

constexpr std::array<std::pair<MinerScript, const char*>, 7> kMinerScripts{{
    {MinerScript::honest, "honest"},
    {MinerScript::withhold_crs, "withhold-crs"},
    {MinerScript::withhold_ok_complain, "withhold-ok-complain"},
    {MinerScript::false_complaint, "false-complaint"},
    {MinerScript::abort_in_reconstruction, "abort-in-reconstruction"},
    {MinerScript::bad_reconstruction_input, "bad-reconstruction-input"},
    {MinerScript::suppress_identities, "suppress-identities"},
}};

template <class E, std::size_t N>
const char* lookup(const std::array<std::pair<E, const char*>, N>& table, E value) noexcept {
    for (const auto& [e, name] : table)
        if (e == value) return name;
    return "?";
}

template <class E, std::size_t N>
E lookup(const std::array<std::pair<E, const char*>, N>& table, const std::string& name, const char* what) {
    for (const auto& [e, n] : table)
        if (name == n) return e;
    throw InvalidParameters(std::string("unknown ") + what + ": " + name);
}

std::uint64_t splitmix(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30U)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27U)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31U);
}

std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0) noexcept {
    std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
    for (const char ch : tag) {
        h ^= static_cast<unsigned char>(ch);
        h *= 0x100000001b3ULL;
    }
    return splitmix(seed ^ splitmix(h ^ splitmix(index)));
}

bool zeroes_bid(IdentityScript s, Mode mode) noexcept {
    switch (s) {
        case IdentityScript::withhold_commitment:
        case IdentityScript::copy_commitment:
        case IdentityScript::bad_opening:
        case IdentityScript::withhold_complaint_response:
            return true;
        case IdentityScript::inconsistent_sharing:
            return mode == Mode::guaranteed;
        default:
            return false;
    }
}

bool breaks_reconstruction(MinerScript s) noexcept {
    return s == MinerScript::abort_in_reconstruction || s == MinerScript::bad_reconstruction_input;
}

// Number of miners an identity announces itself to.
std::size_t announce_count(const IdentityConfig& identity, std::size_t m) noexcept {
    return identity.script == IdentityScript::partial_announce ? m / 2 : m;
}

json opening_json(const Opening& o) { return json{{"value", o.value.value()}, {"randomness", o.randomness}}; }
Opening opening_from_json(const json& j) {
    return Opening{Fp(j.at("value").get<std::uint64_t>()), j.at("randomness").get<std::uint64_t>()};
}

json digests_json(const std::vector<Commitment>& cs) {
    json out = json::array();
    for (const auto& c : cs) out.push_back(c.hex());
    return out;
}
std::vector<Commitment> digests_from_json(const json& j) {
    std::vector<Commitment> out;
    for (const auto& d : j) out.push_back(Commitment{std::stoull(d.get<std::string>(), nullptr, 16)});
    return out;
}

class Network {
  public:
    explicit Network(Transcript& transcript, std::string phase) : t_(transcript), phase_(std::move(phase)) {}
    void set_phase(std::string phase) { phase_ = std::move(phase); }
    void broadcast(int round, const std::string& sender, const std::string& kind, json payload) {
        t_.messages.push_back(Message{phase_, round, sender, std::nullopt, kind, std::move(payload)});
    }
    void send(int round, const std::string& sender, const std::string& to, const std::string& kind, json payload) {
        t_.messages.push_back(Message{phase_, round, sender, to, kind, std::move(payload)});
    }
    void note(std::string text) { t_.notes.push_back(std::move(text)); }

  private:
    Transcript& t_;
    std::string phase_;
};

bool delivered_to(const Message& msg, const std::string& party) { return !msg.recipient || *msg.recipient == party; }

bool matches(const Message& msg, std::string_view phase, int round, std::string_view kind) {
    return msg.phase == phase && msg.round == round && msg.kind == kind;
}

// Agreed identity set and C as derived by one party from the broadcasts it saw.
struct PublicState {
    std::vector<std::string> agreed;
    std::set<std::string> misbehaving;
    std::map<std::string, std::vector<Commitment>> commitments;

    friend bool operator==(const PublicState&, const PublicState&) = default;
};

PublicState derive_public_state(const std::vector<Message>& messages, const std::string& party, std::size_t m,
                                Mode mode, const CommitmentScheme& scheme) {
    PublicState st;
    std::vector<std::vector<std::string>> reports;
    for (const auto& msg : messages) {
        if (msg.recipient || !delivered_to(msg, party)) continue;
        if (matches(msg, "agreement", 2, "candidates"))
            reports.push_back(msg.payload.at("identities").get<std::vector<std::string>>());
    }
    st.agreed = identity_agreement(reports, m);
    const std::set<std::string> in_id(st.agreed.begin(), st.agreed.end());

    // First commitment vector broadcast by each identity; missing ones put it in C.
    for (const auto& msg : messages) {
        if (msg.recipient || !matches(msg, "sharing", 2, "commitments") || !in_id.contains(msg.sender)) continue;
        st.commitments.emplace(msg.sender, digests_from_json(msg.payload.at("digests")));
    }
    for (const auto& id : st.agreed) {
        const auto it = st.commitments.find(id);
        if (it == st.commitments.end() || it->second.size() != m) st.misbehaving.insert(id);
    }

    // Attestation over the broadcast statement.
    if (mode == Mode::guaranteed) {
        std::set<std::string> attested;
        for (const auto& msg : messages) {
            if (msg.recipient || !matches(msg, "sharing", 3, "attestation")) continue;
            const auto it = st.commitments.find(msg.sender);
            if (it == st.commitments.end()) continue;
            const auto& stmt = msg.payload.at("statement");
            if (msg.payload.at("valid").get<bool>() && stmt.at("identity") == msg.sender &&
                stmt.at("digests") == digests_json(it->second))
                attested.insert(msg.sender);
        }
        for (const auto& id : st.agreed)
            if (!attested.contains(id)) st.misbehaving.insert(id);
    }

    // Complaints left without a correct public opening. Ok messages
    // are recorded in the trace but never consumed.
    std::set<std::pair<std::string, std::size_t>> complaints;
    std::set<std::pair<std::string, std::size_t>> answered;
    for (const auto& msg : messages) {
        if (msg.recipient) continue;
        if (matches(msg, "sharing", 6, "complain")) {
            const auto id = msg.payload.at("identity").get<std::string>();
            if (in_id.contains(id) && !st.misbehaving.contains(id))
                complaints.emplace(id, msg.payload.at("miner").get<std::size_t>());
        } else if (matches(msg, "sharing", 7, "dispute")) {
            const auto j = msg.payload.at("miner").get<std::size_t>();
            const auto it = st.commitments.find(msg.sender);
            if (it != st.commitments.end() && j < it->second.size() &&
                scheme.verify(it->second[j], opening_from_json(msg.payload)))
                answered.emplace(msg.sender, j);
        }
    }
    for (const auto& c : complaints)
        if (!answered.contains(c)) st.misbehaving.insert(c.first);
    return st;
}

struct FunctionalityResult {
    ProtocolOutcome outcome;
    std::vector<std::string> notes;
};

// F_TFM parameterized by one miner's (ID, C, commitments), fed every miner's
// input openings.
FunctionalityResult run_functionality(const PublicState& st,
                                      const std::vector<std::optional<std::map<std::string, Opening>>>& inputs,
                                      const ProtocolConfig& config, const CommitmentScheme& scheme) {
    FunctionalityResult res;
    auto& out = res.outcome;
    out.identities = st.agreed;
    const std::size_t t = config.threshold();
    std::vector<Fp> bids;
    for (const auto& id : st.agreed) {
        if (st.misbehaving.contains(id)) {
            bids.emplace_back(0);
            continue;
        }
        const auto& commits = st.commitments.at(id);
        std::vector<Share> correct;
        for (std::size_t j = 0; j < inputs.size(); ++j) {
            if (!inputs[j]) continue;
            const auto it = inputs[j]->find(id);
            if (it != inputs[j]->end() && scheme.verify(commits[j], it->second))
                correct.push_back(Share{static_cast<std::uint32_t>(j + 1), it->second.value});
        }
        if (config.mode == Mode::abort) {
            if (correct.size() < config.miners) {
                res.notes.push_back("computation: missing opening for " + id + ", abort");
                out.aborted = true;
                out.bids.clear();
                out.expected = Outcome::zeros(0);
                out.realized = Realization{};
                return res;
            }
            bids.push_back(additive_reconstruct(correct));
            continue;
        }
        const auto b = shamir_reconstruct(correct, t);
        if (!b) res.notes.push_back("computation: reconstruction failed for " + id + ", bid 0");
        bids.push_back(b.value_or(Fp(0)));
    }
    for (const auto& b : bids) out.bids.push_back(decode_amount(b, config.scale));
    out.expected = evaluate(config.rule, std::span<const double>(out.bids));
    out.realized = sample_outcome(config.rule, std::span<const double>(out.bids), derive_seed(config.seed, kFunctionality));
    return res;
}

void validate(const ProtocolConfig& config) {
    if (config.miners < 1) throw InvalidParameters("protocol: need at least one miner");
    if (!config.miner_scripts.empty() && config.miner_scripts.size() != config.miners)
        throw InvalidParameters("protocol: miner_scripts must list every miner");
    std::set<std::string> ids;
    for (std::size_t j = 0; j < config.miners; ++j) ids.insert(miner_name(j));
    ids.insert(kFunctionality);
    for (const auto& identity : config.identities) {
        if (identity.id.empty() || !ids.insert(identity.id).second)
            throw InvalidParameters("protocol: identity ids must be distinct, non-empty and not party names");
        if (identity.target_miner >= config.miners) throw InvalidParameters("protocol: target miner out of range");
        (void)encode_amount(identity.bid, config.scale);
    }
    if (config.mode == Mode::guaranteed && 2 * config.corrupt_miners() >= config.miners)
        throw InvalidParameters("protocol: guaranteed-output mode needs fewer than m/2 corrupt miners; use abort mode");
}

struct IdentityState {
    const IdentityConfig* config{nullptr};
    std::mt19937_64 rng;
    std::vector<Share> shares;
    std::vector<Opening> openings;
    std::vector<Commitment> commitments;
    bool has_witness{false};
};

}  // namespace

const char* to_string(IdentityScript script) noexcept { return lookup(kIdentityScripts, script); }
const char* to_string(MinerScript script) noexcept { return lookup(kMinerScripts, script); }
IdentityScript identity_script_from_string(const std::string& name) {
    return lookup(kIdentityScripts, name, "identity script");
}
MinerScript miner_script_from_string(const std::string& name) { return lookup(kMinerScripts, name, "miner script"); }

const char* to_string(Mode mode) noexcept { return mode == Mode::guaranteed ? "guaranteed" : "abort"; }
Mode mode_from_string(const std::string& name) {
    if (name == "guaranteed") return Mode::guaranteed;
    if (name == "abort") return Mode::abort;
    throw InvalidParameters("unknown mode: " + name);
}

std::size_t ProtocolConfig::threshold() const noexcept { return mode == Mode::abort ? miners : (miners + 1) / 2; }

MinerScript ProtocolConfig::miner_script(std::size_t j) const {
    return miner_scripts.empty() ? MinerScript::honest : miner_scripts.at(j);
}

std::size_t ProtocolConfig::corrupt_miners() const {
    return static_cast<std::size_t>(std::count_if(miner_scripts.begin(), miner_scripts.end(),
                                                  [](MinerScript s) { return s != MinerScript::honest; }));
}

std::string miner_name(std::size_t j) { return "M" + std::to_string(j + 1); }

std::vector<std::string> identity_agreement(const std::vector<std::vector<std::string>>& reports, std::size_t m) {
    std::map<std::string, std::size_t> counts;
    for (const auto& report : reports) {
        const std::set<std::string> unique(report.begin(), report.end());
        for (const auto& id : unique) ++counts[id];
    }
    std::vector<std::string> agreed;
    for (const auto& [id, n] : counts)
        if (2 * n > m) agreed.push_back(id);
    return agreed;
}

ProtocolRun run_pi_mpc(const ProtocolConfig& config) {
    validate(config);
    const std::size_t m = config.miners;
    const std::size_t t = config.threshold();
    ProtocolRun run;
    Network net(run.transcript, "agreement");
    CommitmentScheme scheme;

    std::vector<std::size_t> miner_order;  // honest first: rushing adversary speaks last
    for (std::size_t j = 0; j < m; ++j)
        if (config.miner_script(j) == MinerScript::honest) miner_order.push_back(j);
    for (std::size_t j = 0; j < m; ++j)
        if (config.miner_script(j) != MinerScript::honest) miner_order.push_back(j);

    std::vector<const IdentityConfig*> identity_order;
    for (const auto& id : config.identities)
        if (id.script == IdentityScript::honest) identity_order.push_back(&id);
    for (const auto& id : config.identities)
        if (id.script != IdentityScript::honest) identity_order.push_back(&id);

    // Identity agreement.
    std::vector<std::vector<std::string>> received(m);
    for (const auto* id : identity_order) {
        const std::size_t reach = announce_count(*id, m);
        for (std::size_t j = 0; j < reach; ++j) {
            net.send(1, id->id, miner_name(j), "announce", json::object());
            received[j].push_back(id->id);
        }
    }
    for (const std::size_t j : miner_order) {
        auto ids = received[j];
        std::sort(ids.begin(), ids.end());
        if (config.miner_script(j) == MinerScript::suppress_identities) ids.clear();
        net.broadcast(2, miner_name(j), "candidates", json{{"identities", ids}});
    }
    const PublicState agreed_state = derive_public_state(run.transcript.messages, "", m, config.mode, scheme);
    const std::set<std::string> in_id(agreed_state.agreed.begin(), agreed_state.agreed.end());

    // Reference strings.
    net.set_phase("sharing");
    for (const std::size_t j : miner_order) {
        if (config.miner_script(j) == MinerScript::withhold_crs) {
            net.note("crs: " + miner_name(j) + " withheld crs, set to 0");
            continue;
        }
        std::mt19937_64 rng(derive_seed(config.seed, "crs", j));
        net.broadcast(1, miner_name(j), "crs", json{{"crs", rng()}});
    }

    // Share and commit.
    std::map<std::string, IdentityState> states;
    const IdentityState* copy_victim = nullptr;
    for (const auto* cfg : identity_order) {
        if (!in_id.contains(cfg->id)) continue;
        auto& st = states[cfg->id];
        st.config = cfg;
        st.rng.seed(derive_seed(config.seed, "identity:" + cfg->id));
        const auto script = cfg->script;
        if (script == IdentityScript::withhold_commitment) {
            net.note("commit: " + cfg->id + " withheld commitments");
            continue;
        }
        if (script == IdentityScript::copy_commitment) {
            if (copy_victim == nullptr) {
                net.note("commit: " + cfg->id + " found no commitments to copy, stays silent");
                continue;
            }
            st.commitments = copy_victim->commitments;
            net.broadcast(2, cfg->id, "commitments", json{{"digests", digests_json(st.commitments)}});
            continue;
        }
        const Fp secret = encode_amount(cfg->bid, config.scale);
        if (config.mode == Mode::abort) {
            st.shares = additive_share(secret, m, st.rng);
            if (script == IdentityScript::inconsistent_sharing)
                net.note("commit: " + cfg->id + " inconsistent sharing has no meaning for additive shares");
        } else if (script == IdentityScript::inconsistent_sharing) {
            for (std::size_t j = 1; j <= m; ++j)
                st.shares.push_back(Share{static_cast<std::uint32_t>(j), Fp::random(st.rng)});
        } else {
            st.shares = shamir_share(secret, t, m, st.rng);
        }
        for (const auto& s : st.shares) {
            st.openings.push_back(Opening{s.value, st.rng()});
            st.commitments.push_back(scheme.commit(st.openings.back()));
        }
        st.has_witness = true;
        if (script == IdentityScript::equivocate) {
            // Broadcast delivers one payload to everyone; the second vector never leaves.
            net.note("commit: " + cfg->id + " attempted equivocation; broadcast delivered a single commitment vector");
        }
        net.broadcast(2, cfg->id, "commitments", json{{"digests", digests_json(st.commitments)}});
        if (copy_victim == nullptr && script == IdentityScript::honest) copy_victim = &st;
    }

    // Attestation that the commitments open to a consistent sharing.
    if (config.mode == Mode::guaranteed) {
        for (const auto* cfg : identity_order) {
            const auto it = states.find(cfg->id);
            if (it == states.end() || it->second.commitments.empty()) continue;
            const auto& st = it->second;
            bool valid = st.has_witness && st.openings.size() == m;
            for (std::size_t j = 0; valid && j < m; ++j) valid = scheme.verify(st.commitments[j], st.openings[j]);
            valid = valid && is_consistent_sharing(st.shares, t);
            net.broadcast(3, cfg->id, "attestation",
                          json{{"statement", {{"identity", cfg->id}, {"digests", digests_json(st.commitments)}}},
                               {"valid", valid}});
        }
    }

    // C from broadcasts so far.
    const auto after_attest = derive_public_state(run.transcript.messages, "", m, config.mode, scheme);

    // Private openings.
    for (const auto* cfg : identity_order) {
        if (!in_id.contains(cfg->id) || after_attest.misbehaving.contains(cfg->id)) continue;
        const auto& st = states.at(cfg->id);
        if (!st.has_witness) continue;  // cannot open commitments it does not own
        for (std::size_t j = 0; j < m; ++j) {
            Opening o = st.openings[j];
            if (j == cfg->target_miner) {
                if (cfg->script == IdentityScript::withhold_share) continue;
                if (cfg->script == IdentityScript::bad_opening ||
                    cfg->script == IdentityScript::withhold_complaint_response)
                    o.value = o.value + Fp(1);
            }
            net.send(5, cfg->id, miner_name(j), "opening", opening_json(o));
        }
    }

    // Ok / complain.
    std::vector<std::map<std::string, Opening>> recorded(m);
    for (const std::size_t j : miner_order) {
        const auto script = config.miner_script(j);
        const std::string me = miner_name(j);
        std::map<std::string, Opening> got;
        for (const auto& msg : run.transcript.messages)
            if (matches(msg, "sharing", 5, "opening") && msg.recipient == me)
                got.emplace(msg.sender, opening_from_json(msg.payload));
        for (const auto& id : after_attest.agreed) {
            if (after_attest.misbehaving.contains(id)) continue;
            const auto it = got.find(id);
            const bool ok = it != got.end() && scheme.verify(after_attest.commitments.at(id)[j], it->second);
            if (ok) recorded[j].emplace(id, it->second);
            if (script == MinerScript::withhold_ok_complain) continue;
            const bool complain = !ok || script == MinerScript::false_complaint;
            net.broadcast(6, me, complain ? "complain" : "ok", json{{"identity", id}, {"miner", j}});
        }
        if (script == MinerScript::withhold_ok_complain) net.note("complain: " + me + " sent no ok/complain messages");
    }

    // Dispute resolution.
    std::vector<std::pair<std::string, std::size_t>> complaints;
    for (const auto& msg : run.transcript.messages)
        if (matches(msg, "sharing", 6, "complain"))
            complaints.emplace_back(msg.payload.at("identity").get<std::string>(), msg.payload.at("miner").get<std::size_t>());
    for (const auto* cfg : identity_order) {
        const auto it = states.find(cfg->id);
        if (it == states.end()) continue;
        const auto& st = it->second;
        for (const auto& [accused, j] : complaints) {
            if (accused != cfg->id) continue;
            if (cfg->script == IdentityScript::withhold_complaint_response || !st.has_witness) {
                net.note("dispute: " + cfg->id + " left the complaint of " + miner_name(j) + " unanswered");
                continue;
            }
            Opening o = st.openings[j];
            if (cfg->script == IdentityScript::bad_opening && j == cfg->target_miner) o.value = o.value + Fp(1);
            json payload = opening_json(o);
            payload["miner"] = j;
            net.broadcast(7, cfg->id, "dispute", std::move(payload));
        }
    }
    for (const auto& msg : run.transcript.messages) {
        if (!matches(msg, "sharing", 7, "dispute")) continue;
        const auto j = msg.payload.at("miner").get<std::size_t>();
        const Opening o = opening_from_json(msg.payload);
        const auto cit = after_attest.commitments.find(msg.sender);
        if (cit != after_attest.commitments.end() && scheme.verify(cit->second[j], o))
            recorded[j].insert_or_assign(msg.sender, o);
    }

    // Unanswered complaints are resolved inside derive_public_state, from each miner's own view.
    const auto final_state = derive_public_state(run.transcript.messages, "", m, config.mode, scheme);
    run.transcript.agreed = final_state.agreed;
    run.transcript.misbehaving.assign(final_state.misbehaving.begin(), final_state.misbehaving.end());

    // Computation phase.
    net.set_phase("computation");
    std::vector<std::optional<std::map<std::string, Opening>>> inputs(m);
    for (const std::size_t j : miner_order) {
        const auto script = config.miner_script(j);
        if (script == MinerScript::abort_in_reconstruction) {
            net.note("computation: " + miner_name(j) + " sent no input");
            continue;
        }
        std::map<std::string, Opening> in;
        json payload = json::object();
        for (const auto& id : final_state.agreed) {
            if (final_state.misbehaving.contains(id)) continue;
            const auto it = recorded[j].find(id);
            if (it == recorded[j].end()) continue;
            Opening o = it->second;
            if (script == MinerScript::bad_reconstruction_input) o.value = o.value + Fp(1);
            in.emplace(id, o);
            payload[id] = opening_json(o);
        }
        net.send(1, miner_name(j), kFunctionality, "input", std::move(payload));
        inputs[j] = std::move(in);
    }

    auto result = run_functionality(final_state, inputs, config, scheme);
    for (auto& n : result.notes) net.note(std::move(n));
    run.outcome = result.outcome;
    for (std::size_t j = 0; j < m; ++j) {
        json payload{{"aborted", run.outcome.aborted}, {"bids", run.outcome.bids}};
        net.send(2, kFunctionality, miner_name(j), "output", std::move(payload));
    }

    // Each honest miner parameterizes F_TFM with the state derived from its own view.
    for (std::size_t j = 0; j < m; ++j) {
        if (config.miner_script(j) != MinerScript::honest) continue;
        const auto view = derive_public_state(run.transcript.messages, miner_name(j), m, config.mode, scheme);
        run.honest_outputs.push_back(run_functionality(view, inputs, config, scheme).outcome);
    }
    return run;
}

ProtocolRun run_pi_mpc_abort_mode(ProtocolConfig config) {
    config.mode = Mode::abort;
    return run_pi_mpc(config);
}

ProtocolOutcome ideal_outcome(const ProtocolConfig& config) {
    validate(config);
    const std::size_t m = config.miners;
    std::map<std::string, double> effective;
    for (const auto& identity : config.identities) {
        std::size_t reports = 0;
        for (std::size_t j = 0; j < announce_count(identity, m); ++j)
            if (config.miner_script(j) != MinerScript::suppress_identities) ++reports;
        if (2 * reports <= m) continue;
        effective[identity.id] =
            zeroes_bid(identity.script, config.mode) ? 0.0 : decode_amount(encode_amount(identity.bid, config.scale), config.scale);
    }
    ProtocolOutcome out;
    for (const auto& [id, bid] : effective) out.identities.push_back(id);

    const bool some_reconstruction = std::any_of(config.identities.begin(), config.identities.end(), [&](const auto& i) {
        return effective.contains(i.id) && !zeroes_bid(i.script, config.mode);
    });
    bool breaks = false;
    for (std::size_t j = 0; j < m; ++j) breaks = breaks || breaks_reconstruction(config.miner_script(j));
    if (config.mode == Mode::abort && breaks && some_reconstruction) {
        out.aborted = true;
        out.expected = Outcome::zeros(0);
        return out;
    }
    for (const auto& [id, bid] : effective) out.bids.push_back(bid);
    out.expected = evaluate(config.rule, std::span<const double>(out.bids));
    out.realized = sample_outcome(config.rule, std::span<const double>(out.bids), derive_seed(config.seed, kFunctionality));
    return out;
}

json ideal_diff(const ProtocolOutcome& real, const ProtocolOutcome& ideal) {
    json diff = json::array();
    auto add = [&](const char* field, const json& r, const json& i) {
        if (r != i) diff.push_back(json{{"field", field}, {"real", r}, {"ideal", i}});
    };
    add("aborted", real.aborted, ideal.aborted);
    add("identities", real.identities, ideal.identities);
    add("bids", real.bids, ideal.bids);
    add("x", real.expected.x, ideal.expected.x);
    add("p", real.expected.p, ideal.expected.p);
    add("mu", real.expected.mu, ideal.expected.mu);
    add("confirmed", real.realized.confirmed, ideal.realized.confirmed);
    add("payment", real.realized.payment, ideal.realized.payment);
    add("miner_revenue", real.realized.miner_revenue, ideal.realized.miner_revenue);
    return diff;
}

CoinTossResult coin_toss(std::size_t m, const std::vector<MinerScript>& scripts, std::uint64_t seed) {
    if (m < 1) throw InvalidParameters("coin toss: need at least one miner");
    if (!scripts.empty() && scripts.size() != m) throw InvalidParameters("coin toss: scripts must list every miner");
    auto script = [&](std::size_t j) { return scripts.empty() ? MinerScript::honest : scripts[j]; };
    CoinTossResult res;
    Network net(res.transcript, "coin_toss");
    CommitmentScheme scheme;

    std::vector<std::size_t> order;
    for (std::size_t j = 0; j < m; ++j)
        if (script(j) == MinerScript::honest) order.push_back(j);
    for (std::size_t j = 0; j < m; ++j)
        if (script(j) != MinerScript::honest) order.push_back(j);

    std::vector<Opening> openings(m);
    res.commitments.resize(m);
    res.contributions.resize(m);
    for (const std::size_t j : order) {
        std::mt19937_64 rng(derive_seed(seed, "coin", j));
        openings[j] = Opening{Fp::random(rng), rng()};
        res.contributions[j] = openings[j].value;
        res.commitments[j] = scheme.commit(openings[j]);
        net.broadcast(1, miner_name(j), "commit", json{{"digest", res.commitments[j].hex()}});
    }
    std::vector<bool> revealed(m, false);
    for (const std::size_t j : order) {
        if (script(j) == MinerScript::abort_in_reconstruction) continue;
        net.broadcast(2, miner_name(j), "reveal", opening_json(openings[j]));
    }
    for (const auto& msg : res.transcript.messages) {
        if (msg.round != 2) continue;
        const std::size_t j = std::stoul(msg.sender.substr(1)) - 1;
        if (scheme.verify(res.commitments[j], opening_from_json(msg.payload))) revealed[j] = true;
    }
    for (std::size_t j = 0; j < m; ++j) {
        if (revealed[j]) {
            res.value = res.value + openings[j].value;
        } else {
            res.excluded.push_back(j);
            net.note("coin toss: " + miner_name(j) + " did not open, excluded");
        }
    }
    return res;
}

EfficientRun run_efficient_instantiation(const ProtocolConfig& config) {
    validate(config);
    EfficientRun run;
    Network net(run.transcript, "clear_bids");
    std::map<std::string, Fp> posted;
    for (const auto& identity : config.identities) {
        if (identity.script == IdentityScript::withhold_commitment) {
            net.note("clear bids: " + identity.id + " posted no bid");
            continue;
        }
        const Fp b = encode_amount(identity.bid, config.scale);
        net.broadcast(1, identity.id, "bid", json{{"bid", b.value()}});
        posted.emplace(identity.id, b);
    }
    for (const auto& [id, b] : posted) {
        run.identities.push_back(id);
        run.bids.push_back(decode_amount(b, config.scale));
    }
    std::vector<MinerScript> scripts(config.miners, MinerScript::honest);
    if (!config.miner_scripts.empty()) scripts = config.miner_scripts;
    auto toss = coin_toss(config.miners, scripts, derive_seed(config.seed, "coin_toss"));
    for (auto& msg : toss.transcript.messages) run.transcript.messages.push_back(std::move(msg));
    for (auto& n : toss.transcript.notes) run.transcript.notes.push_back(std::move(n));
    run.transcript.agreed = run.identities;
    run.seed = toss.value.value();
    run.expected = evaluate(config.rule, std::span<const double>(run.bids));
    run.realized = sample_outcome(config.rule, std::span<const double>(run.bids), run.seed);
    return run;
}

json to_json(const ProtocolConfig& config) {
    json identities = json::array();
    for (const auto& i : config.identities)
        identities.push_back(
            json{{"id", i.id}, {"bid", i.bid}, {"script", to_string(i.script)}, {"target_miner", i.target_miner}});
    json miners = json::array();
    for (std::size_t j = 0; j < config.miners; ++j) miners.push_back(to_string(config.miner_script(j)));
    return json{{"m", config.miners},         {"mode", to_string(config.mode)}, {"seed", config.seed},
                {"scale", config.scale},      {"mechanism", to_json(config.rule)}, {"identities", identities},
                {"miner_scripts", miners}};
}

ProtocolConfig protocol_config_from_json(const json& document) {
    ProtocolConfig config;
    try {
        config.miners = document.at("m").get<std::size_t>();
        config.mode = mode_from_string(document.value("mode", std::string("guaranteed")));
        config.seed = document.value("seed", std::uint64_t{0});
        config.scale = document.value("scale", 1e6);
        config.rule = rule_from_json(document.at("mechanism"));
        for (const auto& i : document.at("identities")) {
            IdentityConfig identity;
            identity.id = i.at("id").get<std::string>();
            identity.bid = i.at("bid").get<double>();
            identity.script = identity_script_from_string(i.value("script", std::string("honest")));
            identity.target_miner = i.value("target_miner", std::size_t{0});
            config.identities.push_back(std::move(identity));
        }
        if (document.contains("miner_scripts"))
            for (const auto& s : document.at("miner_scripts"))
                config.miner_scripts.push_back(miner_script_from_string(s.get<std::string>()));
    } catch (const json::exception& e) {
        throw InvalidParameters(std::string("protocol config: ") + e.what());
    }
    return config;
}

json to_json(const Message& message) {
    json out{{"phase", message.phase},
             {"round", message.round},
             {"sender", message.sender},
             {"channel", message.recipient ? "p2p" : "broadcast"}};
    if (message.recipient) out["recipient"] = *message.recipient;
    out["kind"] = message.kind;
    out["payload"] = message.payload;
    return out;
}

json to_json(const ProtocolOutcome& outcome) {
    return json{{"aborted", outcome.aborted},
                {"identities", outcome.identities},
                {"bids", outcome.bids},
                {"x", outcome.expected.x},
                {"p", outcome.expected.p},
                {"mu", outcome.expected.mu},
                {"confirmed", outcome.realized.confirmed},
                {"payment", outcome.realized.payment},
                {"miner_revenue", outcome.realized.miner_revenue}};
}

json trace_to_json(const ProtocolConfig& config, const ProtocolRun& run) {
    json messages = json::array();
    for (const auto& msg : run.transcript.messages) messages.push_back(to_json(msg));
    return json{{"config", to_json(config)},
                {"messages", messages},
                {"notes", run.transcript.notes},
                {"agreed", run.transcript.agreed},
                {"misbehaving", run.transcript.misbehaving},
                {"outcome", to_json(run.outcome)}};
}

ReplayResult replay(const json& trace) {
    ProtocolConfig config;
    try {
        config = protocol_config_from_json(trace.at("config"));
    } catch (const json::exception& e) {
        throw InvalidParameters(std::string("trace: ") + e.what());
    }
    ReplayResult res;
    res.run = run_pi_mpc(config);
    const json rerun = trace_to_json(config, res.run);
    res.messages_match = trace.contains("messages") && rerun.at("messages") == trace.at("messages");
    res.outcome_match = trace.contains("outcome") && rerun.at("outcome") == trace.at("outcome");
    return res;
}

}  // namespace tfm::mpcsim
