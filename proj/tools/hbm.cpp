#include "hbm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return hbm::run_command(argc, argv, std::cout, std::cerr); }
