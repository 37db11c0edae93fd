// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0
//
// The `cib` command line: gen-data, train, eval, sweep, verify-causal.
// Exit codes: 0 success, 1 verification failure, 2 usage or validation
// error, 3 training divergence.

#pragma once

#include <iosfwd>

namespace cib::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitVerifyFailed = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitDivergence = 3;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cib::cli
