#include <iostream>

#include "fluidrecon/cli.hpp"

int main(int argc, char** argv) { return fluidrecon::run_cli(argc, argv, std::cout, std::cerr); }
