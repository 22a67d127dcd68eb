#include "acc/cli.hpp"

int main(int argc, char** argv) {
    return acc::cli::run_cli(argc, argv);
}
