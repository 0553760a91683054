#include <malloc.h>

#include <iostream>
#include <string>
#include <vector>

#include "necho/cli.hpp"

int main(int argc, char** argv) {
  // Keep large activation buffers on the heap instead of fresh mmaps per step.
  mallopt(M_MMAP_THRESHOLD, 64 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
  return necho::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
