#include "rose/cli.hpp"

int main(int argc, char** argv) { return rose::cli::run(argc, argv); }
