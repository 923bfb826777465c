#include <iostream>
#include <string>
#include <vector>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "kanforge_cli/cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // keep large tensor buffers on the heap between steps instead of
  // mapping and faulting them in on every allocation
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  std::vector<std::string> args(argv + 1, argv + argc);
  return kanforge::cli::run(args, std::cout, std::cerr);
}
