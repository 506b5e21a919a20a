#include <iostream>
#include <string>
#include <vector>

#include "fbesag/cli.hpp"

int main(int argc, char** argv) {
  const std::vector<std::string> args(argv + 1, argv + argc);
  return fbesag::run_cli(args, std::cout, std::cerr);
}
