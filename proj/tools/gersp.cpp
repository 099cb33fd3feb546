// Copyright 2026 The gersp Authors
// SPDX-License-Identifier: Apache-2.0

#include "gersp/cli/app.hpp"

int main(int argc, char** argv) { return gersp::cli::run(argc, argv); }
