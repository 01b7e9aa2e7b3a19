#include <iostream>
#include <string>
#include <vector>

#include "cenergy/cli.hpp"

int main(int argc, char** argv)
{
  std::vector<std::string> args(argv, argv + argc);
  return cenergy::cli::run(args, std::cout, std::cerr);
}
