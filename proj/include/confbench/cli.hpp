// Copyright 2026 The confbench Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

/// @file cli.hpp
/// @brief Command-line front end: gen, embed, train, sweep, ablate, report.
///
/// Settings resolve in three layers: built-in defaults, then the matching
/// section of the JSON file given by --config ("gen", "model", "sweep",
/// "ablation"), then explicit flags. Every command prints the resolved
/// settings as one JSON document before doing any work; --print-config
/// prints it and stops.
///
/// Output root: --out when given, else $CB_RESULTS_DIR, else "results".
///
/// Exit codes: 0 success, 1 runtime failure (including any failed sweep
/// condition), 2 usage or configuration error.

#pragma once

#include <ostream>

namespace confbench::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

inline constexpr char kResultsEnv[] = "CB_RESULTS_DIR";
inline constexpr char kDefaultResultsDir[] = "results";

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace confbench::cli
