#include "nclust/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return nclust::run_cli(argc, argv, std::cout, std::cerr); }
