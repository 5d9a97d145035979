// SPDX-License-Identifier: Apache-2.0
#include "ksos/cli.hpp"

int main(int argc, char** argv) { return ksos::cli::run(argc, argv); }
