#include <iostream>

#include "occlume/cli/cli.hpp"

int main(int argc, char** argv) { return occlume::cli::run_cli(argc, argv, std::cout, std::cerr); }
