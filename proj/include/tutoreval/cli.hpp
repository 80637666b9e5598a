#pragma once

#include <ostream>
#include <span>
#include <string>

namespace tutoreval::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

/// Runs one subcommand. `args[0]` is the program name. Returns 0 on success,
/// 1 on usage or validation errors, 2 on I/O errors.
int run(std::span<const std::string> args, std::ostream& out, std::ostream& err);

}  // namespace tutoreval::cli
