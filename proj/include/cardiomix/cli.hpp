#pragma once

namespace cardiomix {

/// Parses argv and runs one subcommand (gen, augment, train, eval, explain).
/// Returns 0 on success, 1 on a validation or runtime failure, 2 on unusable
/// command lines (unknown flag or subcommand, missing arguments).
int cli_main(int argc, const char* const* argv);

}  // namespace cardiomix
