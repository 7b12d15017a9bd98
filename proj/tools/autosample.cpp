#include <string>
#include <vector>

#include "autosample/cli.hpp"

int main(int argc, char** argv) {
  return autosample::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
