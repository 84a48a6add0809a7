#include "granet/cli.hpp"

int main(int argc, char** argv) { return granet::cli::run_command(argc, argv); }
