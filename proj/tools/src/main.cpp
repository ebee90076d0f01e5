#include <iostream>

#include "wearseg/expcli/commands.hpp"

int main(int argc, char** argv) { return wearseg::expcli::run_cli(argc, argv, std::cout, std::cerr); }
