#include "distilts/cli.hpp"

int main(int argc, char** argv) { return distilts::run_cli(argc, argv); }
