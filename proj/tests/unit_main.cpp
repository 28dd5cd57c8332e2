#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "util.hpp"

int main(int argc, char** argv) {
  // Tiny fixture corpora trip the generator's threshold warnings on purpose.
  relpara::set_warning_sink([](std::string_view) {});
  return doctest::Context(argc, argv).run();
}
