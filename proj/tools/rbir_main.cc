#include <iostream>

#include "cli.h"

int main(int argc, char** argv) {
  return rbir::RunCli(argc, argv, std::cout, std::cerr);
}
