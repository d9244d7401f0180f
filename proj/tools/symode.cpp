#include "symode/cli.hpp"

int main(int argc, char** argv) { return symode::cli::run(argc, argv); }
