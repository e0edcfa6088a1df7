#include <iostream>
#include <string>
#include <vector>

#include "seecg/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return seecg::cli::run(args, std::cout, std::cerr);
}
