#include <iostream>
#include <string>
#include <vector>

#include "rigcal/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return rigcal::cli::run(args, std::cout, std::cerr);
}
