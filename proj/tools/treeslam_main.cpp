#include <iostream>

#include "treeslam/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return treeslam::cli_main(args, std::cout, std::cerr);
}
