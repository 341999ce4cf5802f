#include "cli.hpp"

int main(int argc, char** argv) { return rimlab::cli::run(argc, argv); }
