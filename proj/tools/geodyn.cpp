#include "geodyn/cli.hpp"

int main(int argc, char** argv) { return geodyn::cli::run(argc, argv); }
