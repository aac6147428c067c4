#include <vector>

#include "vollab/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return vollab::run_cli(args);
}
