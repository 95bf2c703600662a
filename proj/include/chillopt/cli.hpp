#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace chillopt {

// plantd's command line. `args` excludes the program name. Returns the exit
// status; module errors print a message on `err` and return nonzero.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace chillopt
