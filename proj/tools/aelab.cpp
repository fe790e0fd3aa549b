#include "aelab/cli.hpp"

int main(int argc, char** argv) { return aelab::cli::run(argc, argv); }
