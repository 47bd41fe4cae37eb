#include "relkal/cli.hpp"

int main(int argc, char** argv) { return relkal::cli::run_cli(argc, argv); }
