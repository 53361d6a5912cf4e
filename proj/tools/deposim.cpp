#include <deposim/cli.hpp>

int main(int argc, char** argv) { return deposim::cli::run_cli(argc, argv); }
