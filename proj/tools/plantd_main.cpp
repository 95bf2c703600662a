#include <iostream>
#include <string>
#include <vector>

#include "chillopt/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return chillopt::run_cli(args, std::cout, std::cerr);
}
