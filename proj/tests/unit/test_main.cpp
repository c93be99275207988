#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "odseg/tensor.hpp"

int main(int argc, char** argv) {
  odseg::configure_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
