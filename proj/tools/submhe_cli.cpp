#include <iostream>

#include "submhe/cli.hpp"

int main(int argc, char** argv) { return submhe::run_cli(argc, argv, std::cout, std::cerr); }
