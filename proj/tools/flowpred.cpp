// Apache License, Version 2.0, refer to LICENSE.txt

#include <iostream>

#include "flowpred/commands.hpp"

int main(int argc, char** argv) { return flowpred::dispatch(argc, argv, std::cout, std::cerr); }
