#include <iostream>

#include "procqa/cli.hpp"

int main(int argc, char** argv) { return procqa::run_cli(argc, argv, std::cout, std::cerr); }
