#pragma once

// kanforge command-line front end.
//
//   kanforge fit-function --target sincos --model kan
//   kanforge ablate --data synth
//   kanforge scaling --skip-train
//   kanforge train --placement K-M-M --data synth
//
// Exit codes: 0 success, 1 runtime or training failure, 2 usage or
// configuration error.

#include <iosfwd>
#include <string>
#include <vector>

namespace kanforge::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Runs one command. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kanforge::cli
