#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace trajattr {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ValidationSummary {
  std::vector<CheckResult> checks;

  bool ok() const;
  std::string text() const;
};

/// Re-checks module invariants against the artifacts of a completed run.
/// Throws IncompleteRunError when required artifacts are missing.
ValidationSummary validate_run(const std::filesystem::path& run_dir);

}  // namespace trajattr
