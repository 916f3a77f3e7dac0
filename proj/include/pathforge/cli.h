// Copyright 2026 The Pathforge Authors. All Rights Reserved.
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

// Command-line front end. Subcommands map onto the library operations:
// segment, patch, extract, make-task, run, sweep, status, gather, synth.

#ifndef PATHFORGE_CLI_H_
#define PATHFORGE_CLI_H_

#include <iosfwd>
#include <string>
#include <vector>

#include "pathforge/error.h"

namespace pathforge {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

/// Exit code for a library error: bad input is 1, everything else 2.
int ExitCodeFor(ErrorCode code);

/// Parses and runs one invocation. args excludes the program name. Normal
/// output goes to `out`; errors go to `err`, as one JSON object per line
/// when --json is given.
int Dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pathforge

#endif  // PATHFORGE_CLI_H_
