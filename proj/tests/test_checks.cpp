#include <gtest/gtest.h>

#include "vkd/checks.hpp"

namespace vkd::checks {
namespace {

TEST(Checks, AllPassOnDefaultSeed) {
  const auto results = run_all(0, 5);
  EXPECT_EQ(results.size(), 11u);
  for (const auto& r : results) {
    EXPECT_TRUE(r.pass) << format(r);
    EXPECT_EQ(r.pass, r.residual <= r.tolerance);
  }
}

TEST(Checks, SameSeedSameResiduals) {
  const auto a = run_all(7, 3);
  const auto b = run_all(7, 3);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(format(a[i]), format(b[i]));
}

TEST(Checks, FormatLine) {
  EXPECT_EQ(format({"frechet_fd", 1.25e-9, 1e-6, true}), "PASS frechet_fd 1.250e-09 1.0e-06");
  EXPECT_EQ(format({"x", 2.0, 1.0, false}), "FAIL x 2.000e+00 1.0e+00");
}

}  // namespace
}  // namespace vkd::checks
