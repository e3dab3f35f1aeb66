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
#include <string>
#include <vector>

#include <json.hpp>

#include <tfm/core.hpp>
#include <tfm/mechanisms.hpp>
#include <tfm/mpcsim/commitment.hpp>
#include <tfm/mpcsim/field.hpp>

namespace tfm::mpcsim {

//! Byzantine behaviors available to a user identity. Each script deviates at a
//! single point of the sharing phase and otherwise follows the protocol.
enum class IdentityScript {
    honest,
    withhold_commitment,          // no commitments broadcast
    inconsistent_sharing,         // commits to shares off any degree t-1 polynomial
    withhold_share,               // skips the target miner's opening, answers the complaint
    bad_opening,                  // wrong opening to the target miner and again in the dispute
    withhold_complaint_response,  // wrong opening to the target miner, ignores the complaint
    equivocate,                   // tries to broadcast two commitment vectors
    copy_commitment,              // replays another identity's commitments (rushing)
    partial_announce,             // announces itself to a minority of miners
};

enum class MinerScript {
    honest,
    withhold_crs,
    withhold_ok_complain,     // silent in the complaint round
    false_complaint,          // complains about every identity
    abort_in_reconstruction,  // sends nothing to the computation phase
    bad_reconstruction_input, // sends corrupted openings to the computation phase
    suppress_identities,      // reports an empty candidate set
};

const char* to_string(IdentityScript script) noexcept;
const char* to_string(MinerScript script) noexcept;
IdentityScript identity_script_from_string(const std::string& name);
MinerScript miner_script_from_string(const std::string& name);

enum class Mode { guaranteed, abort };
const char* to_string(Mode mode) noexcept;
Mode mode_from_string(const std::string& name);

struct IdentityConfig {
    std::string id;
    double bid{0.0};
    IdentityScript script{IdentityScript::honest};
    //! 0-based miner targeted by withhold_share / bad_opening scripts.
    std::size_t target_miner{0};
};

struct ProtocolConfig {
    std::size_t miners{4};
    std::vector<IdentityConfig> identities;
    //! Empty means every miner is honest; otherwise one entry per miner.
    std::vector<MinerScript> miner_scripts;
    MechanismRule rule = make_posted_price(PostedPriceParams{});
    std::uint64_t seed{0};
    //! Field units per currency unit.
    double scale{1e6};
    Mode mode{Mode::guaranteed};

    //! ceil(m/2) in guaranteed mode, m in abort mode.
    [[nodiscard]] std::size_t threshold() const noexcept;
    [[nodiscard]] MinerScript miner_script(std::size_t j) const;
    [[nodiscard]] std::size_t corrupt_miners() const;
};

//! One delivered message. Broadcasts have no recipient.
struct Message {
    std::string phase;  // "agreement", "sharing", "computation", "coin_toss", "clear_bids"
    int round{0};
    std::string sender;
    std::optional<std::string> recipient;
    std::string kind;
    nlohmann::json payload;
};

struct Transcript {
    std::vector<Message> messages;
    std::vector<std::string> notes;
    std::vector<std::string> agreed;       // ID, sorted
    std::vector<std::string> misbehaving;  // final C, sorted
};

struct ProtocolOutcome {
    bool aborted{false};
    std::vector<std::string> identities;
    //! Bids fed to the mechanism, decoded from the field.
    std::vector<double> bids;
    Outcome expected;
    Realization realized;

    friend bool operator==(const ProtocolOutcome&, const ProtocolOutcome&) = default;
};

struct ProtocolRun {
    Transcript transcript;
    ProtocolOutcome outcome;
    //! Output held by each honest miner, in miner order.
    std::vector<ProtocolOutcome> honest_outputs;
};

std::string miner_name(std::size_t j);
inline constexpr const char* kFunctionality = "F_TFM";

//! Identities appearing in more than m/2 of the reports, sorted.
std::vector<std::string> identity_agreement(const std::vector<std::vector<std::string>>& reports, std::size_t m);

//! Runs the sharing and computation phases. Guaranteed mode throws
//! InvalidParameters when corrupt miners reach m/2.
ProtocolRun run_pi_mpc(const ProtocolConfig& config);
//! Same protocol with additive m-of-m sharing, no attestation, and abort when
//! any miner's opening is missing at reconstruction.
ProtocolRun run_pi_mpc_abort_mode(ProtocolConfig config);

//! F_MPC on the effective inputs implied by the scripts, computed without
//! running the protocol. Assumes at most one misbehaving party.
ProtocolOutcome ideal_outcome(const ProtocolConfig& config);

//! Field-by-field differences between two outcomes; an empty array when equal.
nlohmann::json ideal_diff(const ProtocolOutcome& real, const ProtocolOutcome& ideal);

struct CoinTossResult {
    Fp value;
    std::vector<std::size_t> excluded;
    std::vector<Commitment> commitments;
    std::vector<Fp> contributions;
    Transcript transcript;
};

//! Commit-then-reveal among m miners. Miners scripted abort_in_reconstruction
//! withhold their reveal after seeing everyone else's.
CoinTossResult coin_toss(std::size_t m, const std::vector<MinerScript>& scripts, std::uint64_t seed);

struct EfficientRun {
    std::vector<std::string> identities;
    std::vector<double> bids;
    std::uint64_t seed{0};
    Outcome expected;
    Realization realized;
    Transcript transcript;
};

//! Bids broadcast in the clear, then a coin toss seeds the mechanism's draw.
EfficientRun run_efficient_instantiation(const ProtocolConfig& config);

nlohmann::json to_json(const ProtocolConfig& config);
ProtocolConfig protocol_config_from_json(const nlohmann::json& document);
nlohmann::json to_json(const Message& message);
nlohmann::json to_json(const ProtocolOutcome& outcome);
nlohmann::json trace_to_json(const ProtocolConfig& config, const ProtocolRun& run);

struct ReplayResult {
    ProtocolRun run;
    bool messages_match{false};
    bool outcome_match{false};
};

//! Re-executes the configuration stored in a trace and compares the result
//! with the recorded messages and outcome.
ReplayResult replay(const nlohmann::json& trace);

}  // namespace tfm::mpcsim
