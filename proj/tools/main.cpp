#include "tabitd/cli.hpp"

int main(int argc, char** argv) { return tabitd::cli::run(argc, argv); }
