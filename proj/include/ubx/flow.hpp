#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "ubx/machine.hpp"
#include "ubx/typing.hpp"

namespace ubx {

using LabelSet = std::set<LabelId>;

class UnknownLabel : public LabeledError {
 public:
  explicit UnknownLabel(LabelId label)
      : LabeledError("unknown-label", label, "label does not occur in the program") {}
};

/// Result of a monovariant closure analysis. Sets hold shape labels:
/// Literal, BoxOp, Tuple, Lambda and TyLambda labels.
struct FlowResult {
  std::map<LabelId, LabelSet> cache;        // every term label
  std::map<LabelId, LabelSet> binderFlow;   // every binder label
  std::map<LabelId, LabelSet> typePosFlow;  // every TypePos label; BoxOps only

  const LabelSet& cacheOf(LabelId term) const;
  const LabelSet& binderOf(LabelId binder) const;
  const LabelSet& typePosOf(LabelId pos) const;
};

struct AnalyzeOptions {
  /// Nonzero: process constraints in a seeded random order. The least
  /// solution does not depend on it.
  std::uint64_t orderSeed = 0;
};

FlowResult analyze(const TypedProgram& tp, const AnalyzeOptions& options = {});

/// Walks `annotation` against the values described by `shapes`, descending
/// through box contents, tuple fields, function parameters/results and
/// type-abstraction bodies using the flow sets of `fr`.
struct AnnotationVisitor {
  std::function<void(LabelId pos, const LabelSet& boxes)> onBoxPosition;
  std::function<void(const LabelSet& boxes)> onTypeVariable;
};
void walkAnnotation(const FlowResult& fr, const LabeledProgram& program,
                    const Type& annotation, const LabelSet& shapes,
                    const AnnotationVisitor& visitor);

/// BoxOp labels whose boxes may sit in a slot typed by a type variable.
LabelSet boxesAtTypeVariables(const FlowResult& fr, const TypedProgram& tp);

struct AcceptabilityViolation {
  std::string rule;
  LabelId site = kNoLabel;    // construct whose implication fails
  LabelId sink = kNoLabel;    // set that is missing a member
  LabelId shape = kNoLabel;   // the missing member

  std::string describe() const;
  bool operator==(const AcceptabilityViolation&) const = default;
};

/// Checks that `fr` is closed under every propagation rule of the analysis.
/// Any closed over-approximation passes.
std::vector<AcceptabilityViolation> checkAcceptability(const FlowResult& fr,
                                                       const TypedProgram& tp);

/// Membership query appropriate to the sink's kind: the operand of an
/// unbox, a binder, a type position, or any other term label.
bool flowsTo(const FlowResult& fr, const TypedProgram& tp, LabelId shape, LabelId sink);

struct DynamicFlows {
  std::set<std::pair<LabelId, LabelId>> boxToUnbox;    // (BoxOp, UnboxOp)
  std::set<std::pair<LabelId, LabelId>> boxToTypePos;  // (BoxOp, TypePos)
  /// Term and binder labels to the origins of values observed there.
  std::map<LabelId, LabelSet> observedShapes;
};

/// Runs the program and records the flows that actually happen.
DynamicFlows collectingOracle(const TypedProgram& tp, std::uint64_t fuel = 100000);

/// Dynamic flows missing from the static result; empty means sound.
std::vector<std::string> soundnessGaps(const DynamicFlows& dyn, const FlowResult& fr,
                                       const TypedProgram& tp);

/// `{ "cache": {...}, "binderFlow": {...}, "typePosFlow": {...} }`, keys in
/// ascending numeric order.
std::string flowToJson(const FlowResult& fr);

}  // namespace ubx
