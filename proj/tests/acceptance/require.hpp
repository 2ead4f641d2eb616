#pragma once

#include <cstdio>
#include <cstdlib>
#include <sstream>

// First failed check prints its site plus a diagnostic message and aborts the
// binary with a nonzero status, which ctest reports as the criterion failing.
// msg supports stream syntax: REQUIRE(x < y, "x=" << x).
#define REQUIRE(cond, msg)                                                             \
  do {                                                                                 \
    if (!(cond)) {                                                                     \
      std::ostringstream oss_;                                                         \
      oss_ << msg; /* NOLINT */                                                        \
      std::fprintf(stderr, "[FAIL] %s:%d %s | %s\n", __FILE__, __LINE__, #cond,        \
                   oss_.str().c_str());                                                \
      std::exit(1);                                                                    \
    }                                                                                  \
  } while (0)
