#pragma once

#include <cmath>
#include <algorithm>

#include <doctest.h>

#include "dial/error.hpp"

// Checks that expr throws dial::Error carrying the given code.
#define CHECK_THROWS_CODE(expr, expected_code)                      \
  do {                                                              \
    bool thrown_ = false;                                           \
    try {                                                           \
      (void)(expr);                                                 \
    } catch (const dial::Error& e_) {                               \
      thrown_ = true;                                               \
      CHECK_MESSAGE(e_.code() == (expected_code), e_.what());       \
    }                                                               \
    CHECK_MESSAGE(thrown_, "expected dial::Error from " #expr);     \
  } while (0)

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
  return std::abs(a - b) / scale;
}
