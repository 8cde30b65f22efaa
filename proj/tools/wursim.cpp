#include <vector>
#include <string>

#include "wursim/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return wursim::cli::run(args);
}
