#include "doctest.h"
#include "grad_suite.hpp"

TEST_CASE("every primitive passes the finite-difference check") {
  const auto results = dfkd::testing::run_gradient_suite(5);
  CHECK(results.size() >= 40);
  for (const auto& r : results) {
    CAPTURE(r.op);
    CHECK(r.seeds >= 5);
    CHECK(r.max_relative_error < 1e-4);
  }
}
