#include "cardiomix/cli.hpp"

int main(int argc, char** argv) { return cardiomix::cli_main(argc, argv); }
