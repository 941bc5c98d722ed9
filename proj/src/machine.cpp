#include "ubx/machine.hpp"

#include <sstream>

namespace ubx {

RuntimeValue RuntimeValue::rawInt(std::int64_t v, LabelId origin) {
  RuntimeValue r;
  r.kind = ValueKind::RawInt;
  r.intValue = v;
  r.origin = origin;
  return r;
}

RuntimeValue RuntimeValue::rawFloat(double v, LabelId origin) {
  RuntimeValue r;
  r.kind = ValueKind::RawFloat;
  r.floatValue = v;
  r.origin = origin;
  return r;
}

RuntimeValue RuntimeValue::address(Address a, LabelId origin) {
  RuntimeValue r;
  r.kind = ValueKind::Addr;
  r.addr = a;
  r.origin = origin;
  return r;
}

Environment Environment::extend(LabelId binder, Slot slot) const {
  Environment e;
  e.head_ = std::make_shared<const Node>(Node{binder, slot, head_});
  return e;
}

const Slot* Environment::lookup(LabelId binder) const {
  for (const Node* n = head_.get(); n; n = n->next.get()) {
    if (n->binder == binder) return &n->slot;
  }
  return nullptr;
}

void Environment::forEach(const std::function<void(LabelId, const Slot&)>& fn) const {
  for (const Node* n = head_.get(); n; n = n->next.get()) fn(n->binder, n->slot);
}

void Environment::forEachUnseen(const std::function<void(LabelId, const Slot&)>& fn,
                                std::set<const void*>& seen) const {
  for (const Node* n = head_.get(); n; n = n->next.get()) {
    if (!seen.insert(n).second) return;
    fn(n->binder, n->slot);
  }
}

std::string Outcome::describe() const {
  switch (kind) {
    case Kind::Final:
      return observation;
    case Kind::OutOfFuel:
      return "out of fuel after " + std::to_string(steps) + " steps";
    case Kind::Stuck:
      return "stuck at #" + std::to_string(label) + ": " + observation;
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Transitions
// ---------------------------------------------------------------------------

Machine::Machine(const TypedProgram& program)
    : Machine(program, metadataOf(program)) {}

Machine::Machine(const TypedProgram& program, MetadataTable metadata)
    : program_(&program), metadata_(std::move(metadata)) {}

MachineState Machine::inject() const {
  MachineState s;
  s.control.term = program_->program.root().get();
  return s;
}

Traceability Machine::valueTag(const Term& t) const {
  return metadata_.valueTag(t.label);
}

Address Machine::allocate(MachineState& s, HeapObject object) const {
  Address a = s.nextAddress++;
  s.heap.emplace(a, std::move(object));
  return a;
}

void Machine::returnValue(MachineState& s, const Term& producer, Slot slot,
                          MachineObserver* observer) const {
  s.control = Control{true, &producer, Environment{}, slot};
  if (observer) observer->onReturn(s, producer.label, slot);
}

namespace {

void evaluate(MachineState& s, const Term& t, Environment env) {
  s.control = Control{false, &t, std::move(env), Slot{}};
}

StepResult stuck(const Term& at, std::string reason) {
  return StepResult{StepStatus::Stuck, std::move(reason), at.label};
}

const HeapObject* deref(const MachineState& s, const RuntimeValue& v,
                        ObjectKind kind) {
  if (v.kind != ValueKind::Addr) return nullptr;
  auto it = s.heap.find(v.addr);
  if (it == s.heap.end() || it->second.kind != kind) return nullptr;
  return &it->second;
}

std::int64_t wrapping(PrimOp op, std::int64_t a, std::int64_t b) {
  auto ua = static_cast<std::uint64_t>(a);
  auto ub = static_cast<std::uint64_t>(b);
  switch (op) {
    case PrimOp::Add: return static_cast<std::int64_t>(ua + ub);
    case PrimOp::Sub: return static_cast<std::int64_t>(ua - ub);
    default: return static_cast<std::int64_t>(ua * ub);
  }
}

}  // namespace

StepResult Machine::step(MachineState& s, MachineObserver* observer) const {
  if (s.control.returning && s.stack.empty()) return StepResult{StepStatus::Final, {}, kNoLabel};
  ++s.steps;

  if (!s.control.returning) {
    const Term& t = *s.control.term;
    Environment env = s.control.env;
    switch (t.kind) {
      case TermKind::IntLit:
        returnValue(s, t, Slot{valueTag(t), RuntimeValue::rawInt(t.intValue, t.label)},
                    observer);
        break;
      case TermKind::FloatLit:
        returnValue(s, t,
                    Slot{valueTag(t), RuntimeValue::rawFloat(t.floatValue, t.label)},
                    observer);
        break;
      case TermKind::Var: {
        const Slot* slot = env.lookup(t.binder);
        if (!slot) return stuck(t, "unbound variable '" + t.name + "'");
        returnValue(s, t, Slot{valueTag(t), slot->value}, observer);
        break;
      }
      case TermKind::Lam:
      case TermKind::TyLam: {
        HeapObject closure;
        closure.kind = t.kind == TermKind::Lam ? ObjectKind::Closure : ObjectKind::TyClosure;
        closure.origin = t.label;
        closure.env = env;
        Address a = allocate(s, std::move(closure));
        returnValue(s, t, Slot{valueTag(t), RuntimeValue::address(a, t.label)}, observer);
        break;
      }
      case TermKind::Tuple:
        if (t.kids.empty()) {
          HeapObject tuple;
          tuple.kind = ObjectKind::Tuple;
          tuple.origin = t.label;
          Address a = allocate(s, std::move(tuple));
          returnValue(s, t, Slot{valueTag(t), RuntimeValue::address(a, t.label)},
                      observer);
          break;
        }
        [[fallthrough]];
      default: {
        static const std::map<TermKind, FrameKind> kFirstFrame = {
            {TermKind::App, FrameKind::AppFn},   {TermKind::TyApp, FrameKind::TyApp},
            {TermKind::Box, FrameKind::Box},     {TermKind::Unbox, FrameKind::Unbox},
            {TermKind::Tuple, FrameKind::Tuple}, {TermKind::Proj, FrameKind::Proj},
            {TermKind::Let, FrameKind::Let},     {TermKind::Prim, FrameKind::PrimLhs},
            {TermKind::Ifz, FrameKind::Ifz}};
        s.stack.push_back(Frame{kFirstFrame.at(t.kind), &t, env, {}});
        evaluate(s, t.kid(0), std::move(env));
        break;
      }
    }
    return {};
  }

  Slot v = s.control.value;
  Frame f = std::move(s.stack.back());
  s.stack.pop_back();
  const Term& t = *f.term;
  const LabeledProgram& lp = program_->program;

  switch (f.kind) {
    case FrameKind::AppFn: {
      Environment env = f.env;
      s.stack.push_back(Frame{FrameKind::AppArg, &t, Environment{}, {v}});
      evaluate(s, t.kid(1), std::move(env));
      break;
    }
    case FrameKind::AppArg: {
      const HeapObject* closure = deref(s, f.slots[0].value, ObjectKind::Closure);
      if (!closure) return stuck(t, "application of a non-closure");
      const Term& lam = lp.term(closure->origin);
      Slot bound{metadata_.binders.at(lam.binder), v.value};
      Environment env = closure->env.extend(lam.binder, bound);
      if (observer) {
        observer->onBind(s, lam.binder, bound);
        observer->onCall(s, lam.label, &bound);
      }
      evaluate(s, lam.kid(0), std::move(env));
      break;
    }
    case FrameKind::TyApp: {
      const HeapObject* closure = deref(s, v.value, ObjectKind::TyClosure);
      if (!closure) return stuck(t, "type application of a non-type-closure");
      const Term& tylam = lp.term(closure->origin);
      if (observer) observer->onCall(s, tylam.label, nullptr);
      evaluate(s, tylam.kid(0), closure->env);
      break;
    }
    case FrameKind::Box: {
      HeapObject box;
      box.kind = ObjectKind::Box;
      box.tags = {metadata_.boxContents.at(t.label)};
      box.slots = {v.value};
      box.origin = t.label;
      Address a = allocate(s, std::move(box));
      returnValue(s, t, Slot{valueTag(t), RuntimeValue::address(a, t.label)}, observer);
      break;
    }
    case FrameKind::Unbox: {
      const HeapObject* box = deref(s, v.value, ObjectKind::Box);
      if (!box) return stuck(t, "unbox of a non-box value");
      if (observer) observer->onUnbox(s, *box, t.label);
      returnValue(s, t, Slot{valueTag(t), box->slots[0]}, observer);
      break;
    }
    case FrameKind::Tuple: {
      f.slots.push_back(v);
      if (f.slots.size() < t.kids.size()) {
        const Term& next = t.kid(f.slots.size());
        Environment env = f.env;
        s.stack.push_back(std::move(f));
        evaluate(s, next, std::move(env));
        break;
      }
      HeapObject tuple;
      tuple.kind = ObjectKind::Tuple;
      tuple.tags = metadata_.tupleFields.at(t.label);
      for (const auto& slot : f.slots) tuple.slots.push_back(slot.value);
      tuple.origin = t.label;
      Address a = allocate(s, std::move(tuple));
      returnValue(s, t, Slot{valueTag(t), RuntimeValue::address(a, t.label)}, observer);
      break;
    }
    case FrameKind::Proj: {
      const HeapObject* tuple = deref(s, v.value, ObjectKind::Tuple);
      if (!tuple) return stuck(t, "projection from a non-tuple value");
      if (t.index < 1 || t.index > tuple->slots.size()) {
        return stuck(t, "projection index out of range");
      }
      returnValue(s, t, Slot{valueTag(t), tuple->slots[t.index - 1]}, observer);
      break;
    }
    case FrameKind::Let: {
      Slot bound{metadata_.binders.at(t.binder), v.value};
      Environment env = f.env.extend(t.binder, bound);
      if (observer) observer->onBind(s, t.binder, bound);
      evaluate(s, t.kid(1), std::move(env));
      break;
    }
    case FrameKind::PrimLhs: {
      Environment env = f.env;
      s.stack.push_back(Frame{FrameKind::PrimRhs, &t, Environment{}, {v}});
      evaluate(s, t.kid(1), std::move(env));
      break;
    }
    case FrameKind::PrimRhs: {
      const RuntimeValue& lhs = f.slots[0].value;
      const RuntimeValue& rhs = v.value;
      RuntimeValue result;
      if (isFloatOp(t.op)) {
        if (lhs.kind != ValueKind::RawFloat || rhs.kind != ValueKind::RawFloat) {
          return stuck(t, "float primitive on non-float operands");
        }
        double r = t.op == PrimOp::FAdd ? lhs.floatValue + rhs.floatValue
                                        : lhs.floatValue * rhs.floatValue;
        result = RuntimeValue::rawFloat(r);
      } else {
        if (lhs.kind != ValueKind::RawInt || rhs.kind != ValueKind::RawInt) {
          return stuck(t, "integer primitive on non-integer operands");
        }
        result = RuntimeValue::rawInt(wrapping(t.op, lhs.intValue, rhs.intValue));
      }
      returnValue(s, t, Slot{valueTag(t), result}, observer);
      break;
    }
    case FrameKind::Ifz: {
      if (v.value.kind != ValueKind::RawInt) return stuck(t, "ifz on a non-integer");
      evaluate(s, t.kid(v.value.intValue == 0 ? 1 : 2), f.env);
      break;
    }
  }
  return {};
}

Outcome Machine::run(const RunOptions& options) const {
  MachineState s = inject();
  if (options.onState) options.onState(s);
  for (;;) {
    if (s.control.returning && s.stack.empty()) {
      Outcome out;
      out.kind = Outcome::Kind::Final;
      out.value = s.control.value.value;
      out.observation = renderValue(s, out.value);
      out.steps = s.steps;
      return out;
    }
    if (s.steps >= options.fuel) {
      Outcome out;
      out.kind = Outcome::Kind::OutOfFuel;
      out.steps = s.steps;
      return out;
    }
    StepResult r = step(s, options.observer);
    if (r.status == StepStatus::Stuck) {
      Outcome out;
      out.kind = Outcome::Kind::Stuck;
      out.observation = r.reason;
      out.label = r.label;
      out.steps = s.steps;
      return out;
    }
    if (options.collectEvery && s.steps % options.collectEvery == 0) {
      collectInPlace(s);
    }
    if (options.onState) options.onState(s);
  }
}

Outcome run(const TypedProgram& program, std::uint64_t fuel) {
  Machine m(program);
  RunOptions options;
  options.fuel = fuel;
  return m.run(options);
}

// ---------------------------------------------------------------------------
// GC safety and collection
// ---------------------------------------------------------------------------

namespace {

class SafetyChecker {
 public:
  SafetyChecker(const MachineState& s, SafetyReport& report) : s_(s), report_(report) {}

  void slot(const std::string& where, Traceability tag, const RuntimeValue& v) {
    bool isAddr = v.kind == ValueKind::Addr;
    if (tag == Traceability::Ref && !isAddr) {
      report_.violations.push_back({where, "ref-tagged slot holds a raw value"});
    } else if (tag == Traceability::Bits && isAddr) {
      report_.violations.push_back({where, "bits-tagged slot holds an address"});
    } else if (isAddr && !s_.heap.count(v.addr)) {
      report_.violations.push_back(
          {where, "dangling address " + std::to_string(v.addr)});
    }
  }

  void env(const std::string& where, const Environment& e) {
    e.forEachUnseen(
        [&](LabelId binder, const Slot& sl) {
          slot(where + " binder #" + std::to_string(binder), sl.tag, sl.value);
        },
        seen_);
  }

 private:
  const MachineState& s_;
  SafetyReport& report_;
  std::set<const void*> seen_;
};

}  // namespace

SafetyReport gcCheck(const MachineState& s) {
  SafetyReport report;
  SafetyChecker check(s, report);
  if (s.control.returning) {
    check.slot("control", s.control.value.tag, s.control.value.value);
  } else {
    check.env("control env", s.control.env);
  }
  for (std::size_t i = 0; i < s.stack.size(); ++i) {
    const Frame& f = s.stack[i];
    std::string where = "frame " + std::to_string(i);
    for (std::size_t j = 0; j < f.slots.size(); ++j) {
      check.slot(where + " slot " + std::to_string(j), f.slots[j].tag, f.slots[j].value);
    }
    check.env(where + " env", f.env);
  }
  for (const auto& [addr, obj] : s.heap) {
    std::string where = "heap " + std::to_string(addr);
    if (obj.tags.size() != obj.slots.size()) {
      report.violations.push_back({where, "tag/slot count mismatch"});
      continue;
    }
    for (std::size_t j = 0; j < obj.slots.size(); ++j) {
      check.slot(where + " field " + std::to_string(j), obj.tags[j], obj.slots[j]);
    }
    if (obj.kind == ObjectKind::Closure || obj.kind == ObjectKind::TyClosure) {
      check.env(where + " env", obj.env);
    }
  }
  return report;
}

namespace {

class Marker {
 public:
  explicit Marker(const MachineState& s) : s_(s) {}

  void slot(const Slot& sl) { field(sl.tag, sl.value); }

  void field(Traceability tag, const RuntimeValue& v) {
    if (tag == Traceability::Bits) return;
    if (v.kind != ValueKind::Addr) {
      throw CollectorPanic("ref-tagged slot holds a raw value");
    }
    if (!s_.heap.count(v.addr)) {
      throw CollectorPanic("ref-tagged slot holds dangling address " +
                           std::to_string(v.addr));
    }
    if (marked_.insert(v.addr).second) pending_.push_back(v.addr);
  }

  void env(const Environment& e) {
    e.forEachUnseen([&](LabelId, const Slot& sl) { slot(sl); }, seenEnv_);
  }

  void drain() {
    while (!pending_.empty()) {
      Address a = pending_.back();
      pending_.pop_back();
      const HeapObject& obj = s_.heap.at(a);
      for (std::size_t i = 0; i < obj.slots.size(); ++i) field(obj.tags[i], obj.slots[i]);
      if (obj.kind == ObjectKind::Closure || obj.kind == ObjectKind::TyClosure) env(obj.env);
    }
  }

  const std::set<Address>& marked() const { return marked_; }

 private:
  const MachineState& s_;
  std::set<Address> marked_;
  std::vector<Address> pending_;
  std::set<const void*> seenEnv_;
};

}  // namespace

void collectInPlace(MachineState& s) {
  Marker marker(s);
  if (s.control.returning) {
    marker.slot(s.control.value);
  } else {
    marker.env(s.control.env);
  }
  for (const Frame& f : s.stack) {
    for (const Slot& sl : f.slots) marker.slot(sl);
    marker.env(f.env);
  }
  marker.drain();
  for (auto it = s.heap.begin(); it != s.heap.end();) {
    if (marker.marked().count(it->first)) {
      ++it;
    } else {
      it = s.heap.erase(it);
    }
  }
}

MachineState collect(const MachineState& s) {
  MachineState copy = s;
  collectInPlace(copy);
  return copy;
}

std::string renderValue(const MachineState& s, const RuntimeValue& v) {
  switch (v.kind) {
    case ValueKind::RawInt: return std::to_string(v.intValue);
    case ValueKind::RawFloat: return formatFloat(v.floatValue);
    case ValueKind::Addr: break;
  }
  auto it = s.heap.find(v.addr);
  if (it == s.heap.end()) return "<dangling>";
  const HeapObject& obj = it->second;
  switch (obj.kind) {
    case ObjectKind::Box:
      return "(box " + renderValue(s, obj.slots[0]) + ")";
    case ObjectKind::Tuple: {
      std::string out = "(tuple";
      for (const auto& f : obj.slots) out += " " + renderValue(s, f);
      return out + ")";
    }
    case ObjectKind::Closure: return "<closure>";
    case ObjectKind::TyClosure: return "<tyclosure>";
  }
  return "?";
}

std::string traceLine(const MachineState& s) {
  std::ostringstream out;
  out << "step=" << s.steps << " ctl=#" << s.controlLabel() << " heap=" << s.heap.size()
      << " safe=" << (gcCheck(s).ok() ? "yes" : "no");
  return out.str();
}

}  // namespace ubx
