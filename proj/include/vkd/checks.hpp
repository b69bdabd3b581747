#pragma once

#include <cstdint>
#include <string>
#include <vector>

// Randomised invariant suite behind `vkd check`.
namespace vkd::checks {

struct CheckResult {
  std::string name;
  double residual = 0.0;   // worst case over the trials
  double tolerance = 0.0;
  bool pass = false;       // residual <= tolerance
};

// "PASS|FAIL <name> <residual> <tolerance>"
std::string format(const CheckResult& r);

std::vector<CheckResult> run_all(std::uint64_t seed = 0, std::size_t trials = 20);

}  // namespace vkd::checks
