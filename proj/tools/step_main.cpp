#include "step/cli.hpp"

int main(int argc, char** argv) { return step::cli_main(argc, argv); }
