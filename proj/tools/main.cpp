#include <iostream>

#include "bigr/runtime.hpp"
#include "cli.hpp"

int main(int argc, char** argv) {
  bigr::tune_allocator();
  return bigr::cli::run(argc, argv, std::cout, std::cerr);
}
