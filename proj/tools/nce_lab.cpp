#include <iostream>
#include <string>
#include <vector>

#include "nce_lab/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nce_lab::cli::dispatch(args, std::cout, std::cerr);
}
