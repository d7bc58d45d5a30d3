#include "run.hpp"

#include <iostream>

int main(int argc, char** argv) {
  return esh::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
