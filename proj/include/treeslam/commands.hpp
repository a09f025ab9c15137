#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace treeslam {

/// Command-line entry point (`simulate`, `run`, `baseline`, `eval`,
/// `ablate`). `args` excludes the program name. Returns the process exit
/// code: 0 on success, 1 on input/config errors, 2 on usage errors.
int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace treeslam
