#include <string>
#include <vector>

#include "tqe/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return tqe::cli::run(args);
}
