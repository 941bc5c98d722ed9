#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ubx/flow.hpp"
#include "ubx/typing.hpp"

namespace ubx {

/// Box operations, unbox operations and box type positions to eliminate.
struct RemovalSet {
  std::set<LabelId> boxes;
  std::set<LabelId> unboxes;
  std::set<LabelId> typePositions;

  bool removes(LabelId id) const {
    return boxes.count(id) || unboxes.count(id) || typePositions.count(id);
  }
  std::size_t size() const { return boxes.size() + unboxes.size() + typePositions.size(); }
  std::set<LabelId> all() const;
  /// Sorts node labels into the three sets by their kind in `program`.
  static RemovalSet of(const LabeledProgram& program, const std::set<LabelId>& nodes);

  bool operator==(const RemovalSet&) const = default;
};

enum class PinReason : std::uint8_t { ReachesTypeVariable, ModuleBoundary, ExplicitKeepDirective };
std::string_view pinReasonName(PinReason reason);

struct Pin {
  LabelId label = kNoLabel;
  PinReason reason = PinReason::ReachesTypeVariable;
  bool operator==(const Pin&) const = default;
};

struct PinPolicy {
  /// Type positions at a module boundary.
  std::set<LabelId> boundary;
  /// Labels named by keep directives.
  std::set<LabelId> keep;
};

/// Nodes are every BoxOp, UnboxOp and TypePos label. Edges join a box with
/// each unbox and type position it flows to, and the two ends of every type
/// link from the checker. Each edge forces equal removal status.
class ComponentGraph {
 public:
  static ComponentGraph build(const TypedProgram& tp, const FlowResult& fr);

  const std::vector<LabelId>& nodes() const { return nodes_; }
  const std::set<std::pair<LabelId, LabelId>>& edges() const { return edges_; }
  /// Connected components, each sorted, ordered by smallest member.
  const std::vector<std::vector<LabelId>>& components() const { return components_; }
  std::size_t componentOf(LabelId node) const { return componentIndex_.at(node); }

 private:
  std::vector<LabelId> nodes_;
  std::set<std::pair<LabelId, LabelId>> edges_;
  std::vector<std::vector<LabelId>> components_;
  std::map<LabelId, std::size_t> componentIndex_;
};

struct ConsistencyViolation {
  std::string rule;  // "C1" .. "C6", or "kind"
  std::vector<LabelId> labels;
  std::string message;

  std::string describe() const { return rule + ": " + message; }
};

/// Checks every consistency condition; an empty result means the removal
/// preserves typing and semantics.
std::vector<ConsistencyViolation> consistencyCheck(const TypedProgram& tp,
                                                   const FlowResult& fr,
                                                   const RemovalSet& rs);

/// Nodes that may never be removed for polymorphism reasons: boxes that reach
/// a type-variable slot, and the outer box of each type-application argument.
std::set<LabelId> polymorphicNodes(const TypedProgram& tp, const FlowResult& fr);

class RewriteRejected : public InternalError {
 public:
  explicit RewriteRejected(const std::string& message)
      : InternalError("rewrite-rejected", message) {}
};

struct RewriteOptions {
  /// Fault injection: leave this type position in place even if removed.
  LabelId skipTypePosition = kNoLabel;
};

/// Drops removed box/unbox operations and box type constructors. All other
/// labels survive. The result is retypechecked.
TypedProgram rewrite(const TypedProgram& tp, const RemovalSet& rs,
                     const RewriteOptions& options = {});

struct Choice {
  RemovalSet removal;
  std::vector<Pin> pins;
  ComponentGraph graph;
};

/// Removes every component that contains no pinned node.
Choice chooseRemoval(const TypedProgram& tp, const FlowResult& fr,
                     const PinPolicy& policy = {});

struct OptimizationReport {
  std::size_t boxesTotal = 0;
  std::size_t boxesRemoved = 0;
  std::vector<Pin> pins;
  std::vector<std::vector<LabelId>> components;
  RemovalSet removal;

  std::string toJson() const;
};

struct Optimized {
  TypedProgram program;
  RemovalSet removal;
  OptimizationReport report;
};

Optimized optimize(const TypedProgram& tp, const PinPolicy& policy = {},
                   const RewriteOptions& options = {});

class TooLarge : public Error {
 public:
  TooLarge(std::size_t nodes, std::size_t limit)
      : Error("too-large", std::to_string(nodes) + " nodes exceed the limit of " +
                               std::to_string(limit)) {}
};

/// Exhaustive search over node subsets: the inclusion-maximal removal sets
/// that pass consistencyCheck and avoid pinned nodes.
std::vector<RemovalSet> bruteForceMaximal(const TypedProgram& tp, const FlowResult& fr,
                                          const PinPolicy& policy = {},
                                          std::size_t limit = 12);

}  // namespace ubx
