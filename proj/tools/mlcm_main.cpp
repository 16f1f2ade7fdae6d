#include <iostream>

#include "mlcm/cli.hpp"

int main(int argc, char** argv) { return mlcm::cli::run_cli(argc, argv, std::cout, std::cerr); }
