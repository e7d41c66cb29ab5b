#include "cli/cli.hpp"

int main(int argc, char** argv) { return mvgs::cli::run(argc, argv); }
