#include <iostream>

#include "estnet/cli.hpp"

int main(int argc, char** argv) { return estnet::run_cli(argc, argv, std::cout, std::cerr); }
