#include "iarn/cli/run.hpp"

int main(int argc, char** argv) { return iarn::cli::run(argc, argv); }
