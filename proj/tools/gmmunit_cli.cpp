#include <torch/torch.h>

#include <iostream>
#include <string>
#include <vector>

#include "gmmunit/commands.hpp"

int main(int argc, char** argv) {
  torch::set_num_threads(1);
  const std::vector<std::string> args(argv, argv + argc);
  return gmmunit::run_command(args, std::cout, std::cerr);
}
