#include "flipfree/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return flipfree::run_cli(argc, argv, std::cout, std::cerr); }
