// Copyright (c) 2026 the edgetune authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <cstring>
#include <string>
#include <vector>

#include "test_paths.hpp"

std::string g_cli_path;

int main(int argc, char** argv) {
    std::vector<char*> pass;
    for (int i = 0; i < argc; ++i) {
        if (std::strncmp(argv[i], "--cli=", 6) == 0) {
            g_cli_path = argv[i] + 6;
            continue;
        }
        pass.push_back(argv[i]);
    }
    doctest::Context ctx(static_cast<int>(pass.size()), pass.data());
    return ctx.run();
}
