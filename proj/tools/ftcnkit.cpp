#include <iostream>
#include <string>
#include <vector>

#include "ftcn/cli/cli.hpp"

int main(int argc, char** argv) {
  return ftcn::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
