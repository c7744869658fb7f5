#include "dprune/harness.hpp"

int main(int argc, char** argv) {
    return dprune::run_cli(argc, argv);
}
