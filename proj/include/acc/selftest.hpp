#pragma once

namespace acc {

// Runs the quick invariant suites and prints one PASS/FAIL line per suite.
// Returns the number of failed suites (0 = success), usable as an exit code.
int run_selftest();

}  // namespace acc
