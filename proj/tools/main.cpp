#include <iostream>
#include <string>
#include <vector>

#include "fixaudit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fixaudit::run_cli(args, std::cout, std::cerr);
}
