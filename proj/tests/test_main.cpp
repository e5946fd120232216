#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"

#include <cstdio>

#include "nphmm/fit.hpp"

// Every EM trace produced anywhere in the run is audited after the tests.
int main(int argc, char** argv) {
  doctest::Context context(argc, argv);
  const int result = context.run();
  if (context.shouldExit()) return result;
  const auto audit = nphmm::fit::trace_audit();
  std::printf("EM trace audit: %ld runs, %ld steps, %ld decreasing steps, %ld rejected steps, worst drop %.3g\n",
              audit.runs, audit.steps, audit.decreasing_steps, audit.rejected_steps, audit.worst_drop);
  if (audit.decreasing_steps > 0 || audit.rejected_steps > 0) return result != 0 ? result : 1;
  return result;
}
