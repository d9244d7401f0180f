#pragma once

namespace symode::cli {

/// Entry point of the `symode` command. Returns 0 on success, 1 on a runtime
/// failure, 2 on a usage error. Logs go to stderr; artifacts to the given paths
/// (stdout where a path is optional and omitted).
int run(int argc, const char* const* argv);

} // namespace symode::cli
