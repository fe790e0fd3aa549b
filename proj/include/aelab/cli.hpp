#pragma once

namespace aelab::cli {

/// Full command-line front end.  Exit codes: 0 success, 1 runtime failure
/// (training or descent diverged), 2 usage or config error.
int run(int argc, char** argv);

}  // namespace aelab::cli
