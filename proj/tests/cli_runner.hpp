#pragma once

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "cli.hpp"

namespace dsim::testing {

struct CliRun {
    int code = 0;
    std::string out;
    std::string err;
};

/// Runs the dsim command line in-process with stdout and stderr captured.
inline CliRun run_dsim(const std::vector<std::string>& args) {
    std::vector<const char*> argv{"dsim"};
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    auto* old_out = std::cout.rdbuf(out.rdbuf());
    auto* old_err = std::cerr.rdbuf(err.rdbuf());
    CliRun run;
    try {
        run.code = run_cli(static_cast<int>(argv.size()), argv.data());
    } catch (...) {
        std::cout.rdbuf(old_out);
        std::cerr.rdbuf(old_err);
        throw;
    }
    std::cout.rdbuf(old_out);
    std::cerr.rdbuf(old_err);
    run.out = out.str();
    run.err = err.str();
    return run;
}

}  // namespace dsim::testing
