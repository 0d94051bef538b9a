#include "zenfoley/pipeline.hpp"

int main(int argc, char** argv) {
  return zenfoley::pipeline::cli_main(argc, argv);
}
