#include <string>
#include <vector>

#include "iffgp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return iffgp::cli::run(args);
}
