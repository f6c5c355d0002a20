#include "tegan/cli.hpp"

int main(int argc, char** argv) { return tegan::cli::run(argc, argv); }
