#include "ubx/unboxer.hpp"

#include <algorithm>
#include <numeric>

#include <json.hpp>

namespace ubx {

namespace {

std::string ref(LabelId id) { return "#" + std::to_string(id); }

bool isNode(LabelKind k) {
  return k == LabelKind::BoxOp || k == LabelKind::UnboxOp || k == LabelKind::TypePos;
}

std::set<LabelId> boxesIn(const LabelSet& shapes, const LabeledProgram& p) {
  std::set<LabelId> out;
  for (LabelId s : shapes) {
    if (p.hasLabel(s) && p.kind(s) == LabelKind::BoxOp) out.insert(s);
  }
  return out;
}

// Boxes in the operand flow of unbox `u`.
std::set<LabelId> boxesInto(const FlowResult& fr, const LabeledProgram& p, LabelId u) {
  return boxesIn(fr.cacheOf(p.term(u).kid(0).label), p);
}

std::vector<Pin> pinsOf(const TypedProgram& tp, const FlowResult& fr,
                        const PinPolicy& policy) {
  const LabeledProgram& p = tp.program;
  std::vector<Pin> pins;
  for (LabelId id : polymorphicNodes(tp, fr)) pins.push_back({id, PinReason::ReachesTypeVariable});
  for (LabelId id : policy.boundary) {
    if (p.hasLabel(id) && isNode(p.kind(id))) pins.push_back({id, PinReason::ModuleBoundary});
  }
  for (LabelId id : policy.keep) {
    if (p.hasLabel(id) && isNode(p.kind(id))) {
      pins.push_back({id, PinReason::ExplicitKeepDirective});
    }
  }
  std::sort(pins.begin(), pins.end(), [](const Pin& a, const Pin& b) {
    return std::pair(a.label, a.reason) < std::pair(b.label, b.reason);
  });
  return pins;
}

TypePtr stripType(const TypePtr& t, const RemovalSet& rs, LabelId skip) {
  if (t->kind == TypeKind::Box && rs.typePositions.count(t->pos) && t->pos != skip) {
    return stripType(t->args[0], rs, skip);
  }
  if (t->args.empty()) return t;
  auto copy = std::make_shared<Type>(*t);
  for (auto& a : copy->args) a = stripType(a, rs, skip);
  return copy;
}

TermPtr stripTerm(const Term& t, const RemovalSet& rs, LabelId skip) {
  if ((t.kind == TermKind::Box && rs.boxes.count(t.label)) ||
      (t.kind == TermKind::Unbox && rs.unboxes.count(t.label))) {
    return stripTerm(t.kid(0), rs, skip);
  }
  auto copy = std::make_shared<Term>(t);
  for (auto& k : copy->kids) k = stripTerm(*k, rs, skip);
  if (copy->type) copy->type = stripType(copy->type, rs, skip);
  return copy;
}

}  // namespace

std::set<LabelId> RemovalSet::all() const {
  std::set<LabelId> out = boxes;
  out.insert(unboxes.begin(), unboxes.end());
  out.insert(typePositions.begin(), typePositions.end());
  return out;
}

RemovalSet RemovalSet::of(const LabeledProgram& program, const std::set<LabelId>& nodes) {
  RemovalSet rs;
  for (LabelId id : nodes) {
    switch (program.kind(id)) {
      case LabelKind::BoxOp: rs.boxes.insert(id); break;
      case LabelKind::UnboxOp: rs.unboxes.insert(id); break;
      case LabelKind::TypePos: rs.typePositions.insert(id); break;
      default:
        throw LabeledError("not-removable", id,
                           "label is not a box, unbox or box type position");
    }
  }
  return rs;
}

std::string_view pinReasonName(PinReason reason) {
  switch (reason) {
    case PinReason::ReachesTypeVariable: return "ReachesTypeVariable";
    case PinReason::ModuleBoundary: return "ModuleBoundary";
    case PinReason::ExplicitKeepDirective: return "ExplicitKeepDirective";
  }
  return "?";
}

ComponentGraph ComponentGraph::build(const TypedProgram& tp, const FlowResult& fr) {
  const LabeledProgram& p = tp.program;
  ComponentGraph g;
  for (LabelId id = 0; id < p.labelCount(); ++id) {
    if (p.hasLabel(id) && isNode(p.kind(id))) g.nodes_.push_back(id);
  }
  auto edge = [&](LabelId a, LabelId b) {
    if (a != b) g.edges_.emplace(std::min(a, b), std::max(a, b));
  };
  for (LabelId id : g.nodes_) {
    if (p.kind(id) == LabelKind::UnboxOp) {
      for (LabelId b : boxesInto(fr, p, id)) edge(b, id);
    } else if (p.kind(id) == LabelKind::TypePos) {
      for (LabelId b : boxesIn(fr.typePosOf(id), p)) edge(b, id);
    }
  }
  for (const auto& [a, b] : tp.typeLinks) {
    if (p.hasLabel(a) && p.hasLabel(b) && isNode(p.kind(a)) && isNode(p.kind(b))) edge(a, b);
  }

  std::map<LabelId, LabelId> parent;
  for (LabelId id : g.nodes_) parent[id] = id;
  auto find = [&](LabelId x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& [a, b] : g.edges_) {
    LabelId ra = find(a), rb = find(b);
    if (ra != rb) parent[std::max(ra, rb)] = std::min(ra, rb);
  }
  std::map<LabelId, std::vector<LabelId>> groups;
  for (LabelId id : g.nodes_) groups[find(id)].push_back(id);
  for (auto& [root, members] : groups) {
    for (LabelId m : members) g.componentIndex_[m] = g.components_.size();
    g.components_.push_back(std::move(members));
  }
  return g;
}

std::set<LabelId> polymorphicNodes(const TypedProgram& tp, const FlowResult& fr) {
  const LabeledProgram& p = tp.program;
  std::set<LabelId> out = boxesAtTypeVariables(fr, tp);
  for (LabelId pos : p.labelsOfKind(LabelKind::TypePos)) {
    const LabelInfo& info = p.info(pos);
    if (info.path.empty() && info.term->kind == TermKind::TyApp) out.insert(pos);
  }
  return out;
}

std::vector<ConsistencyViolation> consistencyCheck(const TypedProgram& tp,
                                                   const FlowResult& fr,
                                                   const RemovalSet& rs) {
  const LabeledProgram& p = tp.program;
  std::vector<ConsistencyViolation> out;
  auto kindCheck = [&](const std::set<LabelId>& ids, LabelKind want) {
    for (LabelId id : ids) {
      if (!p.hasLabel(id) || p.kind(id) != want) {
        out.push_back({"kind", {id}, ref(id) + " is not a " + std::string(labelKindName(want)) +
                                         " label"});
      }
    }
  };
  kindCheck(rs.boxes, LabelKind::BoxOp);
  kindCheck(rs.unboxes, LabelKind::UnboxOp);
  kindCheck(rs.typePositions, LabelKind::TypePos);
  if (!out.empty()) return out;

  for (LabelId u : p.labelsOfKind(LabelKind::UnboxOp)) {
    for (LabelId b : boxesInto(fr, p, u)) {
      if (rs.boxes.count(b) && !rs.unboxes.count(u)) {
        out.push_back({"C1", {b, u},
                       "box " + ref(b) + " is removed but unbox " + ref(u) +
                           " it flows to is kept"});
      }
      if (rs.unboxes.count(u) && !rs.boxes.count(b)) {
        out.push_back({"C2", {u, b},
                       "unbox " + ref(u) + " is removed but box " + ref(b) +
                           " flowing to it is kept"});
      }
    }
  }
  for (LabelId pos : p.labelsOfKind(LabelKind::TypePos)) {
    for (LabelId b : boxesIn(fr.typePosOf(pos), p)) {
      if (rs.boxes.count(b) && !rs.typePositions.count(pos)) {
        out.push_back({"C3", {b, pos},
                       "box " + ref(b) + " is removed but type position " + ref(pos) +
                           " it flows to is kept"});
      }
      if (rs.typePositions.count(pos) && !rs.boxes.count(b)) {
        out.push_back({"C4", {pos, b},
                       "type position " + ref(pos) + " is removed but box " + ref(b) +
                           " flowing to it is kept"});
      }
    }
  }
  for (LabelId id : polymorphicNodes(tp, fr)) {
    if (rs.removes(id)) {
      out.push_back({"C5", {id},
                     ref(id) + " is removed but reaches a type variable"});
    }
  }
  for (const auto& [a, b] : tp.typeLinks) {
    if (!p.hasLabel(a) || !p.hasLabel(b)) continue;
    if (rs.removes(a) != rs.removes(b)) {
      LabelId gone = rs.removes(a) ? a : b;
      LabelId kept = gone == a ? b : a;
      out.push_back({"C6", {gone, kept},
                     ref(gone) + " is removed but " + ref(kept) +
                         ", which the typing ties to it, is kept"});
    }
  }
  return out;
}

TypedProgram rewrite(const TypedProgram& tp, const RemovalSet& rs,
                     const RewriteOptions& options) {
  TermPtr root = stripTerm(*tp.program.root(), rs, options.skipTypePosition);
  try {
    return typecheck(LabeledProgram::index(root));
  } catch (const Error& e) {
    throw RewriteRejected("rewritten program does not typecheck: " + e.render());
  }
}

Choice chooseRemoval(const TypedProgram& tp, const FlowResult& fr, const PinPolicy& policy) {
  Choice c{RemovalSet{}, pinsOf(tp, fr, policy), ComponentGraph::build(tp, fr)};
  std::vector<bool> pinned(c.graph.components().size(), false);
  for (const Pin& pin : c.pins) pinned[c.graph.componentOf(pin.label)] = true;
  std::set<LabelId> nodes;
  for (std::size_t i = 0; i < pinned.size(); ++i) {
    if (!pinned[i]) nodes.insert(c.graph.components()[i].begin(), c.graph.components()[i].end());
  }
  c.removal = RemovalSet::of(tp.program, nodes);
  return c;
}

std::string OptimizationReport::toJson() const {
  using nlohmann::ordered_json;
  ordered_json out = ordered_json::object();
  out["boxesTotal"] = boxesTotal;
  out["boxesRemoved"] = boxesRemoved;
  ordered_json pinList = ordered_json::array();
  for (const Pin& pin : pins) {
    pinList.push_back({{"label", pin.label}, {"reason", std::string(pinReasonName(pin.reason))}});
  }
  out["pins"] = pinList;
  out["components"] = components;
  out["removed"] = {{"boxes", removal.boxes},
                    {"unboxes", removal.unboxes},
                    {"typePositions", removal.typePositions}};
  return out.dump(2) + "\n";
}

Optimized optimize(const TypedProgram& tp, const PinPolicy& policy,
                   const RewriteOptions& options) {
  FlowResult fr = analyze(tp);
  Choice choice = chooseRemoval(tp, fr, policy);
  auto violations = consistencyCheck(tp, fr, choice.removal);
  if (!violations.empty()) {
    throw RewriteRejected("selected removal is inconsistent: " + violations.front().describe());
  }
  Optimized out{rewrite(tp, choice.removal, options), choice.removal, {}};
  out.report.boxesTotal = tp.program.labelsOfKind(LabelKind::BoxOp).size();
  out.report.boxesRemoved = choice.removal.boxes.size();
  out.report.pins = choice.pins;
  out.report.components = choice.graph.components();
  out.report.removal = choice.removal;
  return out;
}

std::vector<RemovalSet> bruteForceMaximal(const TypedProgram& tp, const FlowResult& fr,
                                          const PinPolicy& policy, std::size_t limit) {
  ComponentGraph g = ComponentGraph::build(tp, fr);
  const auto& nodes = g.nodes();
  if (nodes.size() > limit) throw TooLarge(nodes.size(), limit);
  std::set<LabelId> pinned;
  for (const Pin& pin : pinsOf(tp, fr, policy)) pinned.insert(pin.label);

  std::vector<std::uint64_t> consistent;
  const std::uint64_t count = std::uint64_t{1} << nodes.size();
  for (std::uint64_t mask = 0; mask < count; ++mask) {
    std::set<LabelId> chosen;
    bool ok = true;
    for (std::size_t i = 0; i < nodes.size() && ok; ++i) {
      if (!(mask >> i & 1)) continue;
      if (pinned.count(nodes[i])) ok = false;
      chosen.insert(nodes[i]);
    }
    if (ok && consistencyCheck(tp, fr, RemovalSet::of(tp.program, chosen)).empty()) {
      consistent.push_back(mask);
    }
  }
  std::vector<RemovalSet> maximal;
  for (std::uint64_t m : consistent) {
    bool dominated = std::any_of(consistent.begin(), consistent.end(), [&](std::uint64_t o) {
      return o != m && (o & m) == m;
    });
    if (dominated) continue;
    std::set<LabelId> chosen;
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      if (m >> i & 1) chosen.insert(nodes[i]);
    }
    maximal.push_back(RemovalSet::of(tp.program, chosen));
  }
  return maximal;
}

}  // namespace ubx
