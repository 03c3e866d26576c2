#include <iostream>

#include "demask/cli.hpp"

int main(int argc, char** argv) { return demask::run_cli(argc, argv, std::cout, std::cerr); }
