#include <iostream>

#include "tlvd/cli.hpp"

int main(int argc, char** argv) { return tlvd::cli::run(argc, argv, std::cout, std::cerr); }
