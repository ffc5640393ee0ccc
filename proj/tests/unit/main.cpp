#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "bigr/runtime.hpp"

int main(int argc, char** argv) {
  bigr::tune_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
