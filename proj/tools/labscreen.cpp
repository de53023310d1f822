#include "labscreen/cli.hpp"

int main(int argc, char** argv) { return labscreen::cli::run(argc, argv); }
