// Copyright (c) 2026 The cibnet Authors
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "cib/cli/app.hpp"

int main(int argc, char** argv) { return cib::cli::run(argc, argv, std::cout, std::cerr); }
