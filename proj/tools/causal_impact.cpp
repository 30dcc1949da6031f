#include <iostream>

#include "causal_bsts/cli.hpp"

int main(int argc, char** argv) { return causal_bsts::cli::run(argc, argv, std::cout, std::cerr); }
