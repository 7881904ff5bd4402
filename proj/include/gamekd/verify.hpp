#pragma once

#include <string>
#include <vector>

namespace gamekd {

struct CheckResult {
  std::string name;
  double measured = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string note;
};

// End-to-end self checks: gradient oracles for every primitive and for the
// composed hidden/distillation/task/total losses on a micro-model, the
// layer-map table, loss algebra identities, and the metric oracle
// comparisons. Deterministic; no files touched.
std::vector<CheckResult> run_verification();

bool all_passed(const std::vector<CheckResult>& results);

} // namespace gamekd
