#include <iostream>

#include "keymocap/cli.hpp"

int main(int argc, char** argv) { return keymocap::run_cli(argc, argv, std::cout, std::cerr); }
