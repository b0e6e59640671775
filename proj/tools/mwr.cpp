#include "mwr/cli.hpp"

int main(int argc, char** argv) { return mwr::cli::main(argc, argv); }
