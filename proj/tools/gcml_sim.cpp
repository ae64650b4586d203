#include <iostream>

#include "gcml/cli.hpp"

int main(int argc, char** argv) { return gcml::run_cli(argc, argv, std::cout, std::cerr); }
