#include "pld/cli.hpp"

int main(int argc, char** argv) { return pld::cli::run(argc, argv); }
