#include "acblstm/cli.hpp"

int main(int argc, char** argv) { return acblstm::run_command(argc, argv); }
