#include <iostream>
#include <string>
#include <vector>

#include "skin/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return skin::cli::run(args, std::cout, std::cerr);
}
