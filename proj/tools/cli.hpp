// Copyright 2026 The rcnas Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rcnas::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kConfigError = 2, kNumericAbort = 3, kIoError = 4 };

/// Entry point of the `rcnas` tool. args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rcnas::cli
