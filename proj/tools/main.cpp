// SPDX-License-Identifier: Apache-2.0
#include "ekt/cli.hpp"

int main(int argc, char** argv) { return ekt::cli::run(argc, argv); }
