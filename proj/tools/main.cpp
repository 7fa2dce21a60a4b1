#include "rbmdc/cli/app.hpp"

int main(int argc, char** argv) { return rbmdc::cli::run_subcommand(argc, argv); }
