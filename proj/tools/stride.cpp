#include <iostream>

#include "stride/cli.hpp"

int main(int argc, char** argv) { return stride::cli::run(argc, argv, std::cout, std::cerr); }
