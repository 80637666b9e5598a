#include <iostream>
#include <string>
#include <vector>

#include "tutoreval/cli.hpp"

int main(int argc, char** argv) {
    const std::vector<std::string> args(argv, argv + argc);
    return tutoreval::cli::run(args, std::cout, std::cerr);
}
