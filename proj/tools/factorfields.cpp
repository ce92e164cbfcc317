// Copyright Contributors to the factorfields Project
// SPDX-License-Identifier: Apache-2.0

#include <iostream>

#include "factorfields/cli.hpp"

int main(int argc, char **argv) {
    factorfields::configure_allocator();
    return factorfields::run_cli(argc, argv, std::cout, std::cerr);
}
