#include <iostream>

#include "stepfuse/cli.hpp"

int main(int argc, char** argv) { return stepfuse::cli::run(argc, argv, std::cout, std::cerr); }
