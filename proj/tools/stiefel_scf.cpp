#include "stiefel/harness.hpp"

int main(int argc, char **argv) { return stiefel::cli_main(argc, argv); }
