#include <set>

#include "doctest.h"
#include "isosr/gradcheck.hpp"

using namespace isosr;

TEST_CASE("finite-difference checks pass for every registered gradient") {
  const auto names = gradcheck_names();
  REQUIRE(names.size() >= 10);
  CHECK(std::set<std::string>(names.begin(), names.end()).size() == names.size());

  const auto results = run_all_gradchecks(0);
  REQUIRE(results.size() == names.size());
  for (const auto& r : results) {
    CAPTURE(r.name);
    CAPTURE(r.max_rel_err);
    CHECK(r.ok(1e-4));
  }
}

TEST_CASE("a deliberately corrupted backward is flagged") {
  const auto r = run_negative_control(0);
  CAPTURE(r.max_rel_err);
  CHECK_FALSE(r.ok(1e-4));
}

TEST_CASE("asking for an unknown check is a usage error") {
  CHECK_THROWS_AS(run_gradcheck("no_such_op", 0), UsageError);
}
