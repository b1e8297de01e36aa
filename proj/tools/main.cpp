#include <iostream>

#include "radiodx/cli.hpp"

int main(int argc, char** argv) {
  return radiodx::cli::run(argc, argv, std::cout, std::cerr);
}
