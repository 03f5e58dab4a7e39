#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace xmaml {

struct SelftestCheck {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Finite-difference and closed-form oracle checks of the differentiation
/// and statistics code. Prints one line per check when `out` is given.
std::vector<SelftestCheck> run_selftest(std::ostream* out = nullptr);

}  // namespace xmaml
