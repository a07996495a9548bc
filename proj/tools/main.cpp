#include <string>
#include <vector>

#include "rydtx_cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rydtx::cli::run(args);
}
