#include "tomp/cli.hpp"

int main(int argc, char** argv) { return tomp::run_cli(argc, argv); }
