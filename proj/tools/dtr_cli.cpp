#include <iostream>

#include "dtr/cli.hpp"

int main(int argc, char** argv) { return dtr::run_cli(argc, argv, std::cout, std::cerr); }
