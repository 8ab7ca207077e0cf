#include "sure_eb/cli.hpp"

int main(int argc, char** argv) { return sure_eb::run_cli(argc, argv); }
