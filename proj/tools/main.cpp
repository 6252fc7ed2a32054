#include <iostream>

#include "mlorder/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return mlorder::cli::run(args, std::cout, std::cerr);
}
