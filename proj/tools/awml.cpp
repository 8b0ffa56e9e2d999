#include <iostream>
#include <string>
#include <vector>

#include "awml/cli/commands.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return awml::cli::cli_main(args, std::cout, std::cerr);
}
