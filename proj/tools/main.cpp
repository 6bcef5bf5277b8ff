#include "cli.hpp"

int main(int argc, char** argv) { return kite::run_cli(argc, argv); }
