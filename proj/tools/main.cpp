#include "nkca/cli.hpp"

int main(int argc, char** argv) { return nkca::cli_main(argc, argv); }
