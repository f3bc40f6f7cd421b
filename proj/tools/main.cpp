#include <iostream>

#include "primseq/cli.hpp"

int main(int argc, char** argv) { return primseq::run(argc, argv, std::cout, std::cerr); }
