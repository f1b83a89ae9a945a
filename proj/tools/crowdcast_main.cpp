#include "crowdcast/cli.hpp"

int main(int argc, char** argv) { return crowdcast::run_cli(argc, argv); }
