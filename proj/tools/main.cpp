#include "fairfed/cli.hpp"

int main(int argc, char** argv) { return fairfed::run_cli(argc, argv); }
