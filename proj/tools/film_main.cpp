#include "film/cli.hpp"

int main(int argc, char** argv) { return film::cli::main(argc, argv); }
