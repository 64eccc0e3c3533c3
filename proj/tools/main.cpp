#include "patchtrace/cli.hpp"

int main(int argc, char** argv) { return patchtrace::cli::run(argc, argv); }
