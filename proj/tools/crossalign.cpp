// Copyright (c) 2026, The crossalign authors
// SPDX-License-Identifier: Apache-2.0

#include "crossalign/cli.hpp"

int main(int argc, char** argv) { return crossalign::cli::run(argc, argv); }
