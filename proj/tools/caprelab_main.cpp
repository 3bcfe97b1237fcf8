#include <iostream>

#include "caprelab/cli.hpp"

int main(int argc, char** argv) { return caprelab::run_cli(argc, argv, std::cout, std::cerr); }
