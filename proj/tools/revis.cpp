#include "revis/cli.hpp"

int main(int argc, char** argv) { return revis::cli::run(argc, argv); }
