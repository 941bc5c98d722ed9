#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ubx/generator.hpp"
#include "ubx/machine.hpp"

namespace ubx {

struct DiffFailure {
  std::uint64_t seed = 0;
  std::string phase;  // typecheck, run-mismatch, gc-violation, consistency
  std::string detail;
};

struct DiffReport {
  std::size_t total = 0;
  std::size_t passed = 0;
  std::vector<DiffFailure> failures;  // sorted by seed

  bool ok() const { return failures.empty(); }
  std::size_t failuresIn(const std::string& phase) const;
  std::string summary() const;
};

struct DiffOptions {
  std::uint64_t seed = 1;
  std::size_t trials = 100;
  GenConfig base;  // seed and maxDepth are replaced per trial
  std::uint64_t fuel = 100000;
  /// Fault injection: keep the first removed parameter type position.
  bool injectRewriteFault = false;
  /// Where failing programs are written as `seed-<n>.ubx`; defaults to
  /// $UBX_FAILURE_DIR, then `ubx-failures`.
  std::optional<std::string> failureDir;
  bool writeArtifacts = true;
};

/// Generator settings for one trial; depends on the seed alone so any
/// reported seed can be rerun by itself.
GenConfig trialConfig(const GenConfig& base, std::uint64_t seed);

/// Runs the whole pipeline on one program and reports the first failing
/// phase, if any.
std::optional<DiffFailure> diffOne(const TypedProgram& tp, std::uint64_t seed,
                                   const DiffOptions& options);

DiffReport diffRun(const DiffOptions& options);

/// Runs with a gcCheck of every state; returns the first violation.
std::optional<std::string> runChecked(const TypedProgram& tp, std::uint64_t fuel,
                                      Outcome& outcome);

}  // namespace ubx
