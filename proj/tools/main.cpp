#include <iostream>
#include <string>
#include <vector>

#include "wigner/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return wigner::cli::run_command(args, std::cout, std::cerr);
}
