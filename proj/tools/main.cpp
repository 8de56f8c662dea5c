#include "ipo/cli.hpp"

int main(int argc, char** argv) { return ipo::cli::run(argc, argv); }
