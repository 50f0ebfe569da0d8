#include "promptsteer/cli.hpp"

#include <iostream>

int main(int argc, char** argv) {
    return promptsteer::run_cli({argv, argv + argc}, std::cout, std::cerr);
}
