#include "synthpipe/cli.hpp"

int main(int argc, char** argv) { return synthpipe::run_cli(argc, argv); }
