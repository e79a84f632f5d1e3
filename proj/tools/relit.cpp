#include "relit/cli.hpp"

int main(int argc, char** argv) { return relit::cli::run(argc, argv); }
