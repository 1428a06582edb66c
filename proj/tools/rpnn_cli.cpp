#include "rpnn/cli.hpp"

int main(int argc, char** argv) { return rpnn::cli_dispatch(argc, argv); }
