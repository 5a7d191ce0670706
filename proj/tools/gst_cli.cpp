#include <iostream>
#include <string>
#include <vector>

#include "gst/cli/run.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gst::cli::run_cli(args, std::cout, std::cerr);
}
