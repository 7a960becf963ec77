#include "lobq/cli.hpp"

int main(int argc, char** argv) { return lobq::cli::run(argc, argv); }
