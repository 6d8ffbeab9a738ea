#include "zorl/harness.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return zorl::harness::run_cli(args);
}
