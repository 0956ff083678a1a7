#include <iostream>

#include "calcap/cli.hpp"

int main(int argc, char** argv) { return calcap::run_cli(argc, argv, std::cout, std::cerr); }
