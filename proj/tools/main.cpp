// tools/main.cpp

#include "ctcbridge/cli.hpp"

int main(int argc, char** argv) { return ctcbridge::cli::run(argc, argv); }
