#include <iostream>
#include <string>
#include <vector>

#include "sppca_app.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sppca::app::run(args, std::cout, std::cerr);
}
