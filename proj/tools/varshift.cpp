#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "varshift/cli.hpp"

int main(int argc, char** argv) {
  // Batches run to hundreds of MB; keep freed blocks in the heap instead of
  // returning them to the OS and faulting them back in on the next layer.
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  std::vector<std::string> args(argv + 1, argv + argc);
  return varshift::run(args, std::cout, std::cerr);
}
