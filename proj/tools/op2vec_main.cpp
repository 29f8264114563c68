#include "op2vec/cli.hpp"

int main(int argc, char** argv) { return op2vec::run_cli(argc, argv); }
