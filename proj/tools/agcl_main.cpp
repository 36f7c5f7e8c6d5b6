#include <iostream>
#include <string>
#include <vector>

#include "agcl/cli/app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return agcl::cli::run_command(args, std::cout, std::cerr);
}
