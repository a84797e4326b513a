#include <iostream>

#include "stepcat/cli.hpp"

int main(int argc, char** argv) {
  return stepcat::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
