#include "crisisscope/cli.hpp"

int main(int argc, char** argv) { return crisisscope::cli_run(argc, argv); }
