#include "attnsup/cli.hpp"

int main(int argc, char** argv) { return attnsup::cli::run(argc, argv); }
