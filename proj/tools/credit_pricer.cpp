#include <string>
#include <vector>

#include "pricer/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return pricer::cli::run(args);
}
