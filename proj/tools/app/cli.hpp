#pragma once

#include <iosfwd>

namespace ctrlsimp::app {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitRuntime = 2;

// Runs one `ctrlsimp <subcommand> ...` invocation.
int cli_dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace ctrlsimp::app
