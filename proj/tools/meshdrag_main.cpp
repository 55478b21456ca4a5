#include "meshdrag/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return meshdrag::cli::run(argc, argv, std::cout, std::cerr); }
