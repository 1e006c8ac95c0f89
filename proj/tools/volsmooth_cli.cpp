#include "volsmooth/cli.hpp"

int main(int argc, char** argv) { return volsmooth::cli::run_cli(argc, argv); }
