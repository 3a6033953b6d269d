#include <iostream>

#include "mmhs/cli.hpp"

int main(int argc, char** argv) { return mmhs::run_cli({argv, argv + argc}, std::cout, std::cerr); }
