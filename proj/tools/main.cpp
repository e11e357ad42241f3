#include <iostream>
#include <string>
#include <vector>

#include "permurank/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return permurank::cli::run(args, std::cout, std::cerr);
}
