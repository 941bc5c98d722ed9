#include "ubx/flow.hpp"

#include <algorithm>
#include <numeric>
#include <random>

#include <json.hpp>

namespace ubx {

namespace {

const LabelSet kEmpty;

const LabelSet& lookup(const std::map<LabelId, LabelSet>& m, LabelId id) {
  auto it = m.find(id);
  return it == m.end() ? kEmpty : it->second;
}

bool isShape(LabelKind k) {
  return k == LabelKind::Literal || k == LabelKind::BoxOp || k == LabelKind::Tuple ||
         k == LabelKind::Lambda || k == LabelKind::TyLambda;
}

bool isTermLabel(LabelKind k) {
  return k != LabelKind::Binder && k != LabelKind::TypePos;
}

class Solver {
 public:
  explicit Solver(const LabeledProgram& p)
      : p_(p), cache_(p.labelCount()), binder_(p.labelCount()) {}

  void solve(std::vector<LabelId> order) {
    do {
      changed_ = false;
      for (LabelId id : order) apply(p_.term(id));
    } while (changed_);
  }

  FlowResult result() const {
    FlowResult fr;
    for (LabelId id = 0; id < p_.labelCount(); ++id) {
      if (!p_.hasLabel(id)) continue;
      LabelKind k = p_.kind(id);
      if (k == LabelKind::Binder) {
        fr.binderFlow[id] = binder_[id];
      } else if (k == LabelKind::TypePos) {
        fr.typePosFlow[id];
      } else {
        fr.cache[id] = cache_[id];
      }
    }
    return fr;
  }

 private:
  void addAll(LabelSet& dst, const LabelSet& src) {
    if (&dst == &src) return;
    for (LabelId x : src) {
      if (dst.insert(x).second) changed_ = true;
    }
  }

  void add(LabelSet& dst, LabelId x) {
    if (dst.insert(x).second) changed_ = true;
  }

  void apply(const Term& t) {
    LabelSet& out = cache_[t.label];
    if (isShape(p_.kind(t.label))) add(out, t.label);
    switch (t.kind) {
      case TermKind::Var:
        addAll(out, binder_[t.binder]);
        break;
      case TermKind::Let:
        addAll(binder_[t.binder], cache_[t.kid(0).label]);
        addAll(out, cache_[t.kid(1).label]);
        break;
      case TermKind::Ifz:
        addAll(out, cache_[t.kid(1).label]);
        addAll(out, cache_[t.kid(2).label]);
        break;
      case TermKind::App: {
        LabelSet fns = cache_[t.kid(0).label];
        for (LabelId l : fns) {
          if (p_.kind(l) != LabelKind::Lambda) continue;
          const Term& lam = p_.term(l);
          addAll(binder_[lam.binder], cache_[t.kid(1).label]);
          addAll(out, cache_[lam.kid(0).label]);
        }
        break;
      }
      case TermKind::TyApp: {
        LabelSet fns = cache_[t.kid(0).label];
        for (LabelId l : fns) {
          if (p_.kind(l) != LabelKind::TyLambda) continue;
          addAll(out, cache_[p_.term(l).kid(0).label]);
        }
        break;
      }
      case TermKind::Unbox: {
        LabelSet boxes = cache_[t.kid(0).label];
        for (LabelId b : boxes) {
          if (p_.kind(b) != LabelKind::BoxOp) continue;
          addAll(out, cache_[p_.term(b).kid(0).label]);
        }
        break;
      }
      case TermKind::Proj: {
        LabelSet tuples = cache_[t.kid(0).label];
        for (LabelId u : tuples) {
          if (p_.kind(u) != LabelKind::Tuple) continue;
          const Term& tuple = p_.term(u);
          if (t.index < 1 || t.index > tuple.kids.size()) continue;
          addAll(out, cache_[tuple.kid(t.index - 1).label]);
        }
        break;
      }
      default:
        break;
    }
  }

  const LabeledProgram& p_;
  std::vector<LabelSet> cache_;
  std::vector<LabelSet> binder_;
  bool changed_ = false;
};

class Walker {
 public:
  Walker(const FlowResult& fr, const LabeledProgram& p, const AnnotationVisitor& v)
      : fr_(fr), p_(p), v_(v) {}

  void walk(const Type& ty, const LabelSet& shapes) {
    switch (ty.kind) {
      case TypeKind::Int:
      case TypeKind::Float:
        return;
      case TypeKind::Var: {
        LabelSet boxes = ofKind(shapes, LabelKind::BoxOp);
        if (!boxes.empty() && v_.onTypeVariable) v_.onTypeVariable(boxes);
        return;
      }
      case TypeKind::Box: {
        LabelSet boxes = ofKind(shapes, LabelKind::BoxOp);
        if (ty.pos != kNoLabel && v_.onBoxPosition) v_.onBoxPosition(ty.pos, boxes);
        LabelSet contents;
        for (LabelId b : boxes) merge(contents, fr_.cacheOf(p_.term(b).kid(0).label));
        walk(ty.content(), contents);
        return;
      }
      case TypeKind::Tuple: {
        for (std::size_t i = 0; i < ty.args.size(); ++i) {
          LabelSet fields;
          for (LabelId u : ofKind(shapes, LabelKind::Tuple)) {
            const Term& tuple = p_.term(u);
            if (tuple.kids.size() != ty.args.size()) continue;
            merge(fields, fr_.cacheOf(tuple.kid(i).label));
          }
          walk(*ty.args[i], fields);
        }
        return;
      }
      case TypeKind::Arrow: {
        LabelSet params, results;
        for (LabelId l : ofKind(shapes, LabelKind::Lambda)) {
          const Term& lam = p_.term(l);
          merge(params, fr_.binderOf(lam.binder));
          merge(results, fr_.cacheOf(lam.kid(0).label));
        }
        walk(*ty.args[0], params);
        walk(*ty.args[1], results);
        return;
      }
      case TypeKind::Forall: {
        LabelSet bodies;
        for (LabelId l : ofKind(shapes, LabelKind::TyLambda)) {
          merge(bodies, fr_.cacheOf(p_.term(l).kid(0).label));
        }
        walk(ty.content(), bodies);
        return;
      }
    }
  }

 private:
  LabelSet ofKind(const LabelSet& shapes, LabelKind kind) const {
    LabelSet out;
    for (LabelId s : shapes) {
      if (p_.hasLabel(s) && p_.kind(s) == kind) out.insert(s);
    }
    return out;
  }

  static void merge(LabelSet& dst, const LabelSet& src) { dst.insert(src.begin(), src.end()); }

  const FlowResult& fr_;
  const LabeledProgram& p_;
  const AnnotationVisitor& v_;
};

// Lam binders paired with their parameter annotations.
std::vector<std::pair<LabelId, const Type*>> annotatedBinders(const LabeledProgram& p) {
  std::vector<std::pair<LabelId, const Type*>> out;
  for (const auto& [id, ty] : p.typeAnnotations()) {
    if (p.kind(id) == LabelKind::Binder) out.emplace_back(id, ty.get());
  }
  return out;
}

}  // namespace

const LabelSet& FlowResult::cacheOf(LabelId term) const { return lookup(cache, term); }
const LabelSet& FlowResult::binderOf(LabelId binder) const {
  return lookup(binderFlow, binder);
}
const LabelSet& FlowResult::typePosOf(LabelId pos) const {
  return lookup(typePosFlow, pos);
}

void walkAnnotation(const FlowResult& fr, const LabeledProgram& program,
                    const Type& annotation, const LabelSet& shapes,
                    const AnnotationVisitor& visitor) {
  Walker(fr, program, visitor).walk(annotation, shapes);
}

FlowResult analyze(const TypedProgram& tp, const AnalyzeOptions& options) {
  const LabeledProgram& p = tp.program;
  std::vector<LabelId> order;
  for (LabelId id = 0; id < p.labelCount(); ++id) {
    if (p.hasLabel(id) && isTermLabel(p.kind(id))) order.push_back(id);
  }
  if (options.orderSeed != 0) {
    std::mt19937_64 rng(options.orderSeed);
    std::shuffle(order.begin(), order.end(), rng);
  }
  Solver solver(p);
  solver.solve(std::move(order));
  FlowResult fr = solver.result();

  AnnotationVisitor visitor;
  visitor.onBoxPosition = [&](LabelId pos, const LabelSet& boxes) {
    fr.typePosFlow[pos].insert(boxes.begin(), boxes.end());
  };
  for (const auto& [binder, ty] : annotatedBinders(p)) {
    walkAnnotation(fr, p, *ty, fr.binderOf(binder), visitor);
  }
  return fr;
}

LabelSet boxesAtTypeVariables(const FlowResult& fr, const TypedProgram& tp) {
  LabelSet out;
  AnnotationVisitor visitor;
  visitor.onTypeVariable = [&](const LabelSet& boxes) {
    out.insert(boxes.begin(), boxes.end());
  };
  for (const auto& [binder, ty] : annotatedBinders(tp.program)) {
    walkAnnotation(fr, tp.program, *ty, fr.binderOf(binder), visitor);
  }
  return out;
}

std::string AcceptabilityViolation::describe() const {
  return rule + " at #" + std::to_string(site) + ": #" + std::to_string(shape) +
         " missing from #" + std::to_string(sink);
}

std::vector<AcceptabilityViolation> checkAcceptability(const FlowResult& fr,
                                                       const TypedProgram& tp) {
  const LabeledProgram& p = tp.program;
  std::vector<AcceptabilityViolation> out;
  auto require = [&](const std::string& rule, LabelId site, const LabelSet& src,
                     const LabelSet& dst, LabelId sink) {
    for (LabelId s : src) {
      if (!dst.count(s)) out.push_back({rule, site, sink, s});
    }
  };

  for (LabelId id = 0; id < p.labelCount(); ++id) {
    if (!p.hasLabel(id) || !isTermLabel(p.kind(id))) continue;
    const Term& t = p.term(id);
    const LabelSet& here = fr.cacheOf(id);
    if (isShape(p.kind(id)) && !here.count(id)) out.push_back({"shape", id, id, id});
    switch (t.kind) {
      case TermKind::Var:
        require("variable", id, fr.binderOf(t.binder), here, id);
        break;
      case TermKind::Let:
        require("let-bound", id, fr.cacheOf(t.kid(0).label), fr.binderOf(t.binder),
                t.binder);
        require("let-body", id, fr.cacheOf(t.kid(1).label), here, id);
        break;
      case TermKind::Ifz:
        require("ifz-branch", id, fr.cacheOf(t.kid(1).label), here, id);
        require("ifz-branch", id, fr.cacheOf(t.kid(2).label), here, id);
        break;
      case TermKind::App:
        for (LabelId l : fr.cacheOf(t.kid(0).label)) {
          if (!p.hasLabel(l) || p.kind(l) != LabelKind::Lambda) continue;
          const Term& lam = p.term(l);
          require("app-argument", id, fr.cacheOf(t.kid(1).label), fr.binderOf(lam.binder),
                  lam.binder);
          require("app-result", id, fr.cacheOf(lam.kid(0).label), here, id);
        }
        break;
      case TermKind::TyApp:
        for (LabelId l : fr.cacheOf(t.kid(0).label)) {
          if (!p.hasLabel(l) || p.kind(l) != LabelKind::TyLambda) continue;
          require("tyapp-result", id, fr.cacheOf(p.term(l).kid(0).label), here, id);
        }
        break;
      case TermKind::Unbox:
        for (LabelId b : fr.cacheOf(t.kid(0).label)) {
          if (!p.hasLabel(b) || p.kind(b) != LabelKind::BoxOp) continue;
          require("unbox-content", id, fr.cacheOf(p.term(b).kid(0).label), here, id);
        }
        break;
      case TermKind::Proj:
        for (LabelId u : fr.cacheOf(t.kid(0).label)) {
          if (!p.hasLabel(u) || p.kind(u) != LabelKind::Tuple) continue;
          const Term& tuple = p.term(u);
          if (t.index < 1 || t.index > tuple.kids.size()) continue;
          require("proj-field", id, fr.cacheOf(tuple.kid(t.index - 1).label), here, id);
        }
        break;
      default:
        break;
    }
  }

  for (const auto& [binder, ty] : annotatedBinders(p)) {
    AnnotationVisitor visitor;
    LabelId site = binder;
    visitor.onBoxPosition = [&](LabelId pos, const LabelSet& boxes) {
      require("type-position", site, boxes, fr.typePosOf(pos), pos);
    };
    walkAnnotation(fr, p, *ty, fr.binderOf(binder), visitor);
  }
  return out;
}

bool flowsTo(const FlowResult& fr, const TypedProgram& tp, LabelId shape, LabelId sink) {
  const LabeledProgram& p = tp.program;
  if (!p.hasLabel(sink)) throw UnknownLabel(sink);
  if (!p.hasLabel(shape)) throw UnknownLabel(shape);
  switch (p.kind(sink)) {
    case LabelKind::UnboxOp:
      return fr.cacheOf(p.term(sink).kid(0).label).count(shape) > 0;
    case LabelKind::Binder:
      return fr.binderOf(sink).count(shape) > 0;
    case LabelKind::TypePos:
      return fr.typePosOf(sink).count(shape) > 0;
    default:
      return fr.cacheOf(sink).count(shape) > 0;
  }
}

namespace {

class Collector : public MachineObserver {
 public:
  explicit Collector(const LabeledProgram& p) : p_(p) {}

  DynamicFlows flows;

  void onUnbox(const MachineState&, const HeapObject& box, LabelId unboxLabel) override {
    flows.boxToUnbox.emplace(box.origin, unboxLabel);
  }

  void onBind(const MachineState& s, LabelId binder, const Slot& slot) override {
    record(binder, slot.value);
    auto it = p_.typeAnnotations().find(binder);
    if (it != p_.typeAnnotations().end()) walk(s, *it->second, slot.value);
  }

  void onCall(const MachineState& s, LabelId code, const Slot* argument) override {
    if (argument) {
      for (const Type* dom : domains_[code]) walk(s, *dom, argument->value);
    }
    pending_.emplace_back(s.stack.size(), code);
  }

  void onReturn(const MachineState& s, LabelId producer, const Slot& slot) override {
    record(producer, slot.value);
    // With no return frames, a call completes when control returns at the
    // stack depth it was entered at. Tail calls complete together.
    while (!pending_.empty() && pending_.back().first == s.stack.size()) {
      LabelId code = pending_.back().second;
      pending_.pop_back();
      for (const Type* cod : results_[code]) walk(s, *cod, slot.value);
    }
  }

 private:
  void record(LabelId at, const RuntimeValue& v) {
    if (v.origin != kNoLabel) flows.observedShapes[at].insert(v.origin);
  }

  const HeapObject* object(const MachineState& s, const RuntimeValue& v) const {
    if (v.kind != ValueKind::Addr) return nullptr;
    auto it = s.heap.find(v.addr);
    return it == s.heap.end() ? nullptr : &it->second;
  }

  void walk(const MachineState& s, const Type& ty, const RuntimeValue& v) {
    const HeapObject* obj = object(s, v);
    if (!obj) return;
    switch (ty.kind) {
      case TypeKind::Box:
        if (obj->kind != ObjectKind::Box) return;
        if (ty.pos != kNoLabel) flows.boxToTypePos.emplace(obj->origin, ty.pos);
        walk(s, ty.content(), obj->slots[0]);
        return;
      case TypeKind::Tuple:
        if (obj->kind != ObjectKind::Tuple || obj->slots.size() != ty.args.size()) return;
        for (std::size_t i = 0; i < ty.args.size(); ++i) walk(s, *ty.args[i], obj->slots[i]);
        return;
      case TypeKind::Arrow:
        if (obj->kind != ObjectKind::Closure) return;
        addOnce(domains_[obj->origin], ty.args[0].get());
        addOnce(results_[obj->origin], ty.args[1].get());
        return;
      case TypeKind::Forall:
        if (obj->kind != ObjectKind::TyClosure) return;
        addOnce(results_[obj->origin], ty.args[0].get());
        return;
      default:
        return;
    }
  }

  static void addOnce(std::vector<const Type*>& v, const Type* t) {
    if (std::find(v.begin(), v.end(), t) == v.end()) v.push_back(t);
  }

  const LabeledProgram& p_;
  std::map<LabelId, std::vector<const Type*>> domains_;
  std::map<LabelId, std::vector<const Type*>> results_;
  std::vector<std::pair<std::size_t, LabelId>> pending_;
};

}  // namespace

DynamicFlows collectingOracle(const TypedProgram& tp, std::uint64_t fuel) {
  Collector collector(tp.program);
  Machine machine(tp);
  RunOptions options;
  options.fuel = fuel;
  options.observer = &collector;
  Outcome out = machine.run(options);
  if (out.kind == Outcome::Kind::OutOfFuel) {
    throw Error("out-of-fuel", "program did not finish within " + std::to_string(fuel) +
                                   " steps");
  }
  if (out.kind == Outcome::Kind::Stuck) {
    throw InternalError("stuck", "well-typed program got stuck: " + out.observation);
  }
  return std::move(collector.flows);
}

std::vector<std::string> soundnessGaps(const DynamicFlows& dyn, const FlowResult& fr,
                                       const TypedProgram& tp) {
  std::vector<std::string> gaps;
  auto id = [](LabelId l) { return "#" + std::to_string(l); };
  for (const auto& [b, u] : dyn.boxToUnbox) {
    if (!flowsTo(fr, tp, b, u)) gaps.push_back("box " + id(b) + " reached unbox " + id(u));
  }
  for (const auto& [b, pos] : dyn.boxToTypePos) {
    if (!fr.typePosOf(pos).count(b)) {
      gaps.push_back("box " + id(b) + " reached type position " + id(pos));
    }
  }
  for (const auto& [at, shapes] : dyn.observedShapes) {
    bool binder = tp.program.kind(at) == LabelKind::Binder;
    const LabelSet& known = binder ? fr.binderOf(at) : fr.cacheOf(at);
    for (LabelId s : shapes) {
      if (!known.count(s)) gaps.push_back(id(s) + " observed at " + id(at));
    }
  }
  return gaps;
}

std::string flowToJson(const FlowResult& fr) {
  using nlohmann::ordered_json;
  auto section = [](const std::map<LabelId, LabelSet>& m) {
    ordered_json obj = ordered_json::object();
    for (const auto& [k, v] : m) {
      obj[std::to_string(k)] = ordered_json(std::vector<LabelId>(v.begin(), v.end()));
    }
    return obj;
  };
  ordered_json out = ordered_json::object();
  out["cache"] = section(fr.cache);
  out["binderFlow"] = section(fr.binderFlow);
  out["typePosFlow"] = section(fr.typePosFlow);
  return out.dump(2) + "\n";
}

}  // namespace ubx
