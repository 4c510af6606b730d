#include <iostream>

#include "handformer/cli/run.hpp"

int main(int argc, char** argv) {
  return handformer::cli::run_command(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
