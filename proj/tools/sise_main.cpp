#include <string>
#include <vector>

#include "sise/cli.hpp"

int main(int argc, char** argv) {
  return sise::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
