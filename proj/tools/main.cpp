#include "cli.hpp"

int main(int argc, char** argv) { return dsim::run_cli(argc, argv); }
