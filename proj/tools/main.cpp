#include "cli.hpp"

int main(int argc, char** argv) { return kaliko::cli::run(argc, argv); }
