#include <iostream>

#include "relu_lab/cli.hpp"

int main(int argc, char** argv) { return relu_lab::run_cli(argc, argv, std::cout, std::cerr); }
