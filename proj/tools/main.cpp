#include "mmrkit/cli.hpp"

int main(int argc, char** argv) { return mmr::run_cli(argc, argv); }
