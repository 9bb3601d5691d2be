#include "ifo/cli/app.hpp"

int main(int argc, char** argv) { return ifo::cli::run(argc, argv); }
