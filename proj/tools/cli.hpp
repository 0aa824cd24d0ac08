#pragma once

namespace dsim {

/// Entry point of the `dsim` binary. Returns 0 on success, 1 on runtime
/// failure and 2 on usage errors.
int run_cli(int argc, const char* const* argv);

}  // namespace dsim
