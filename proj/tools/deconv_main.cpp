#include "deconv/cli.hpp"

int main(int argc, char** argv) { return deconv::run_cli(argc, argv); }
