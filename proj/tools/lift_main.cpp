#include "lift/cli/commands.hpp"

int main(int argc, char** argv) {
    return lift::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
