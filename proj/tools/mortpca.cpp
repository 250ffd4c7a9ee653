#include "mortpca/cli.hpp"

int main(int argc, char** argv) { return mortpca::cli::run(argc, argv); }
