#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include "pssl/tensor.hpp"

int main(int argc, char** argv) {
  pssl::tune_allocator();
  return doctest::Context(argc, argv).run();
}
