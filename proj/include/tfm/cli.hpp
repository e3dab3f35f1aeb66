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

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

namespace tfm::cli {

enum ExitCode : int {
    kExitOk = 0,
    kExitCheckFailed = 1,
    kExitConfigError = 2,
    kExitBudgetExceeded = 3,
};

struct Options {
    std::filesystem::path out{"."};
    //! Overrides the config's "seed" when set.
    std::optional<std::uint64_t> seed;
};

//! One AuditReport JSON per target (report_<i>.json) and summary.csv.
int cmd_audit(const nlohmann::json& config, const Options& options);
//! revenue_curve.csv: exact E[mu] against the revenue ceiling per sweep point.
int cmd_revenue_curve(const nlohmann::json& config, const Options& options);
//! welfare.csv and welfare.json: truthful welfare per value vector and the ceilings.
int cmd_welfare(const nlohmann::json& config, const Options& options);
//! trace.json and outcome.json with the diff against the ideal functionality.
int cmd_mpc_sim(const nlohmann::json& config, const Options& options);
//! replay.json: whether re-execution reproduces the recorded trace.
int cmd_replay(const nlohmann::json& trace, const Options& options);

//! Entry point for the tfm-lab executable. Maps parse and parameter errors to
//! exit code 2 and exhausted budgets to 3.
int run(int argc, char** argv);

}  // namespace tfm::cli
