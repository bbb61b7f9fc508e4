#include <iostream>

#include "hoaf/cli.hpp"

int main(int argc, char** argv) { return hoaf::cli::run(argc, argv, std::cout, std::cerr); }
