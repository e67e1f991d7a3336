#include <magma/cli.hpp>

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return magma::cli::run(std::move(args));
}
