#include "cli.hpp"

int main(int argc, char** argv) { return otoc::cli::main_entry(argc, argv); }
