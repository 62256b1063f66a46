#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace semdtm::cli {

// Exit codes of the semdtm command.
enum ExitCode : int {
    kOk = 0,
    kViolation = 2,
    kSpecError = 3,
    kDisagreement = 4,
    kIoError = 5,
};

// args excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace semdtm::cli
