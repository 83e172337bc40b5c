#include <iostream>

#include "csoeval/cli.hpp"

int main(int argc, char** argv) { return csoeval::cli::run(argc, argv, std::cout, std::cerr); }
