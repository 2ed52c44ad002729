#include "dynpet/cli.hpp"

int main(int argc, char** argv) { return dynpet::run_cli(argc, argv); }
