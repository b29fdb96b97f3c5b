#include <iostream>
#include <string>
#include <vector>

#include "storyplan/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return storyplan::run_cli(args, std::cout, std::cerr);
}
