#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ubx/typing.hpp"

namespace ubx {

using Address = std::uint64_t;

enum class ValueKind : std::uint8_t { RawInt, RawFloat, Addr };

/// A machine word. `origin` is shadow provenance for the collecting oracle:
/// the literal, allocation or lambda label the value came from, or kNoLabel
/// for primitive results.
struct RuntimeValue {
  ValueKind kind = ValueKind::RawInt;
  std::int64_t intValue = 0;
  double floatValue = 0.0;
  Address addr = 0;
  LabelId origin = kNoLabel;

  static RuntimeValue rawInt(std::int64_t v, LabelId origin = kNoLabel);
  static RuntimeValue rawFloat(double v, LabelId origin = kNoLabel);
  static RuntimeValue address(Address a, LabelId origin);
};

struct Slot {
  Traceability tag = Traceability::Bits;
  RuntimeValue value;
};

/// Persistent map from binder label to slot; extension shares the tail.
class Environment {
 public:
  Environment() = default;

  Environment extend(LabelId binder, Slot slot) const;
  const Slot* lookup(LabelId binder) const;
  void forEach(const std::function<void(LabelId, const Slot&)>& fn) const;
  /// Visits bindings not reachable from a node already in `seen`; shared
  /// tails are therefore visited once across calls.
  void forEachUnseen(const std::function<void(LabelId, const Slot&)>& fn,
                     std::set<const void*>& seen) const;
  bool empty() const { return head_ == nullptr; }

 private:
  struct Node {
    LabelId binder;
    Slot slot;
    std::shared_ptr<const Node> next;
  };
  std::shared_ptr<const Node> head_;
};

enum class ObjectKind : std::uint8_t { Box, Tuple, Closure, TyClosure };

struct HeapObject {
  ObjectKind kind = ObjectKind::Box;
  std::vector<Traceability> tags;  // Box: one, Tuple: one per field
  std::vector<RuntimeValue> slots;
  LabelId origin = kNoLabel;  // allocating BoxOp/Tuple, or code label
  Environment env;            // closures only
};

enum class FrameKind : std::uint8_t {
  AppFn,    // evaluating the operator; holds the pending argument
  AppArg,   // holds the operator value; evaluating the argument
  TyApp,
  Box,
  Unbox,
  Tuple,    // holds evaluated fields; evaluating the next one
  Proj,
  Let,
  PrimLhs,
  PrimRhs,  // holds the left operand
  Ifz,
};

struct Frame {
  FrameKind kind = FrameKind::Box;
  const Term* term = nullptr;  // the construct this frame belongs to
  Environment env;             // environment for pending subterms
  std::vector<Slot> slots;     // values held while the frame waits
};

struct Control {
  bool returning = false;
  const Term* term = nullptr;  // Eval: term to evaluate; Ret: its producer
  Environment env;             // Eval only
  Slot value;                  // Ret only
};

struct MachineState {
  Control control;
  std::vector<Frame> stack;
  std::map<Address, HeapObject> heap;
  Address nextAddress = 1;
  std::uint64_t steps = 0;

  LabelId controlLabel() const {
    return control.term ? control.term->label : kNoLabel;
  }
};

struct Outcome {
  enum class Kind : std::uint8_t { Final, OutOfFuel, Stuck } kind = Kind::Final;
  RuntimeValue value;
  std::string observation;  // Final: rendered value; Stuck: reason
  LabelId label = kNoLabel;  // Stuck only
  std::uint64_t steps = 0;

  bool sameAs(const Outcome& other) const {
    return kind == other.kind && observation == other.observation;
  }
  std::string describe() const;
};

struct SafetyViolation {
  std::string where;
  std::string detail;
};

struct SafetyReport {
  std::vector<SafetyViolation> violations;
  bool ok() const { return violations.empty(); }
};

class CollectorPanic : public InternalError {
 public:
  explicit CollectorPanic(const std::string& message)
      : InternalError("collector-panic", message) {}
};

/// Hooks for instrumentation (the collecting oracle).
class MachineObserver {
 public:
  virtual ~MachineObserver() = default;
  virtual void onUnbox(const MachineState&, const HeapObject& box, LabelId unboxLabel) {}
  virtual void onBind(const MachineState&, LabelId binder, const Slot& slot) {}
  virtual void onReturn(const MachineState&, LabelId producer, const Slot& slot) {}
  /// Entry into a Lambda or TyLambda body; `argument` is null for the latter.
  virtual void onCall(const MachineState&, LabelId code, const Slot* argument) {}
};

struct RunOptions {
  std::uint64_t fuel = 100000;
  /// Called on the injected state and after every transition.
  std::function<void(const MachineState&)> onState;
  /// Collect before every k-th step when nonzero.
  std::uint32_t collectEvery = 0;
  MachineObserver* observer = nullptr;
};

enum class StepStatus : std::uint8_t { Running, Final, Stuck };

struct StepResult {
  StepStatus status = StepStatus::Running;
  std::string reason;           // Stuck only
  LabelId label = kNoLabel;     // Stuck only
};

/// Environment machine over a typed program. Slot tags come from the static
/// metadata table of the program being run.
class Machine {
 public:
  explicit Machine(const TypedProgram& program);
  Machine(const TypedProgram& program, MetadataTable metadata);

  MachineState inject() const;
  /// Performs exactly one transition in place.
  StepResult step(MachineState& s, MachineObserver* observer = nullptr) const;
  Outcome run(const RunOptions& options = {}) const;

  const TypedProgram& program() const { return *program_; }
  const MetadataTable& metadata() const { return metadata_; }

 private:
  Traceability valueTag(const Term& t) const;
  void returnValue(MachineState& s, const Term& producer, Slot slot,
                   MachineObserver* observer) const;
  Address allocate(MachineState& s, HeapObject object) const;

  const TypedProgram* program_;
  MetadataTable metadata_;
};

Outcome run(const TypedProgram& program, std::uint64_t fuel = 100000);

SafetyReport gcCheck(const MachineState& s);

/// Precise mark-and-sweep: marks from the control value/environment and all
/// frame slots, following only ref-tagged slots, then drops unmarked objects.
MachineState collect(const MachineState& s);
/// In-place variant used by the run loop.
void collectInPlace(MachineState& s);

std::string renderValue(const MachineState& s, const RuntimeValue& v);

/// `step=<n> ctl=#<label> heap=<size> safe=<yes/no>`
std::string traceLine(const MachineState& s);

}  // namespace ubx
