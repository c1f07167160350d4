#include <iostream>

#include "mavae/cli.hpp"

int main(int argc, char** argv) { return mavae::run_cli(argc, argv, std::cout, std::cerr); }
