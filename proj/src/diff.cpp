#include "ubx/diff.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "ubx/flow.hpp"
#include "ubx/unboxer.hpp"

namespace ubx {

std::size_t DiffReport::failuresIn(const std::string& phase) const {
  std::size_t n = 0;
  for (const auto& f : failures) n += f.phase == phase;
  return n;
}

std::string DiffReport::summary() const {
  std::string out = "passed " + std::to_string(passed) + "/" + std::to_string(total);
  for (const auto& f : failures) {
    out += "\nseed " + std::to_string(f.seed) + " [" + f.phase + "] " + f.detail;
  }
  return out;
}

GenConfig trialConfig(const GenConfig& base, std::uint64_t seed) {
  GenConfig cfg = base;
  cfg.seed = seed;
  cfg.maxDepth = 3 + static_cast<unsigned>(seed % 5);
  return cfg;
}

std::optional<std::string> runChecked(const TypedProgram& tp, std::uint64_t fuel,
                                      Outcome& outcome) {
  std::optional<std::string> violation;
  RunOptions options;
  options.fuel = fuel;
  options.onState = [&](const MachineState& s) {
    if (violation) return;
    SafetyReport r = gcCheck(s);
    if (!r.ok()) {
      violation = "step " + std::to_string(s.steps) + ": " + r.violations.front().where + ": " +
                  r.violations.front().detail;
    }
  };
  outcome = Machine(tp).run(options);
  return violation;
}

namespace {

// First removed type position that sits in a parameter annotation.
LabelId faultTarget(const TypedProgram& tp, const RemovalSet& rs) {
  for (LabelId pos : rs.typePositions) {
    const LabelInfo& info = tp.program.info(pos);
    if (info.term->kind == TermKind::Lam) return pos;
  }
  return kNoLabel;
}

}  // namespace

std::optional<DiffFailure> diffOne(const TypedProgram& tp, std::uint64_t seed,
                                   const DiffOptions& options) {
  auto failure = [&](const std::string& phase, const std::string& detail) {
    return std::optional<DiffFailure>(DiffFailure{seed, phase, detail});
  };

  Outcome before;
  if (auto v = runChecked(tp, options.fuel, before)) {
    return failure("gc-violation", "original: " + *v);
  }
  if (before.kind != Outcome::Kind::Final) {
    return failure("run-mismatch", "original did not finish: " + before.describe());
  }

  FlowResult fr = analyze(tp);
  Choice choice = chooseRemoval(tp, fr);
  auto violations = consistencyCheck(tp, fr, choice.removal);
  if (!violations.empty()) return failure("consistency", violations.front().describe());

  RewriteOptions rw;
  if (options.injectRewriteFault) rw.skipTypePosition = faultTarget(tp, choice.removal);
  TypedProgram optimized;
  try {
    optimized = rewrite(tp, choice.removal, rw);
  } catch (const RewriteRejected& e) {
    return failure("typecheck", e.what());
  }

  Outcome after;
  if (auto v = runChecked(optimized, options.fuel, after)) {
    return failure("gc-violation", "optimized: " + *v);
  }
  if (!before.sameAs(after)) {
    return failure("run-mismatch", before.describe() + " became " + after.describe());
  }
  return std::nullopt;
}

DiffReport diffRun(const DiffOptions& options) {
  DiffReport report;
  for (std::size_t i = 0; i < options.trials; ++i) {
    std::uint64_t seed = options.seed + i;
    ++report.total;
    TermPtr term = generateTerm(trialConfig(options.base, seed));
    std::optional<DiffFailure> failure;
    try {
      failure = diffOne(typecheck(assignLabels(term)), seed, options);
    } catch (const Error& e) {
      failure = DiffFailure{seed, "typecheck", e.render()};
    }
    if (!failure) {
      ++report.passed;
      continue;
    }
    report.failures.push_back(*failure);
    if (!options.writeArtifacts) continue;
    std::string dir = options.failureDir.value_or("");
    if (dir.empty()) {
      const char* env = std::getenv("UBX_FAILURE_DIR");
      dir = env && *env ? env : "ubx-failures";
    }
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream out(std::filesystem::path(dir) / ("seed-" + std::to_string(seed) + ".ubx"));
    std::string detail = failure->detail;
    for (std::size_t at = 0; (at = detail.find('\n', at)) != std::string::npos; at += 3) {
      detail.replace(at, 1, "\n; ");
    }
    out << "; phase: " << failure->phase << "\n; " << detail << "\n" << printTerm(*term) << "\n";
  }
  return report;
}

}  // namespace ubx
