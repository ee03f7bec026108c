#include "cernn/cli.hpp"

int main(int argc, char** argv) { return cernn::cli::run(argc, argv); }
