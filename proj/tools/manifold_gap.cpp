#include <iostream>

#include "manifold_gap/cli.hpp"

int main(int argc, char** argv) { return manifold_gap::run_cli(argc, argv, std::cout, std::cerr); }
