#include "wavesim/cli.hpp"

int main(int argc, char** argv) { return wavesim::run_cli(argc, argv); }
