#include "ubx/modules.hpp"

#include <algorithm>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ubx/generator.hpp"
#include "ubx/machine.hpp"

namespace ubx {

namespace {

// Qualified names contain characters user identifiers cannot, so they never
// collide with binders inside definitions.
std::string local(const std::string& unit, const std::string& name) {
  return unit + "." + name;
}
std::string exported(const std::string& unit, const std::string& name) {
  return unit + "/" + name;
}

TermPtr renameFree(const TermPtr& t, const std::map<std::string, std::string>& names,
                   std::set<std::string>& bound) {
  if (t->kind == TermKind::Var) {
    auto it = names.find(t->name);
    if (it == names.end() || bound.count(t->name)) return t;
    auto n = std::make_shared<Term>(*t);
    n->name = it->second;
    return n;
  }
  auto n = std::make_shared<Term>(*t);
  if (t->kind == TermKind::Lam) {
    bool fresh = bound.insert(t->name).second;
    n->kids[0] = renameFree(t->kids[0], names, bound);
    if (fresh) bound.erase(t->name);
    return n;
  }
  if (t->kind == TermKind::Let) {
    n->kids[0] = renameFree(t->kids[0], names, bound);
    bool fresh = bound.insert(t->name).second;
    n->kids[1] = renameFree(t->kids[1], names, bound);
    if (fresh) bound.erase(t->name);
    return n;
  }
  for (auto& k : n->kids) k = renameFree(k, names, bound);
  return n;
}

TermPtr renameFree(const TermPtr& t, const std::map<std::string, std::string>& names) {
  std::set<std::string> bound;
  return renameFree(t, names, bound);
}

[[noreturn]] void fail(const SExpr& at, std::vector<std::string> expected,
                       const std::string& message) {
  throw ParseError(at.line, at.column, std::move(expected), message);
}

const std::string& atom(const SExpr& e, const std::string& what) {
  if (e.kind != SExpr::Kind::Atom) fail(e, {what}, "expected " + what);
  return e.atom;
}

std::string identifierAt(const SExpr& e) {
  const std::string& s = atom(e, "identifier");
  if (!isIdentifier(s)) fail(e, {"identifier"}, "'" + s + "' is not an identifier");
  return s;
}

// `(x T)` or `(x e)`; returns the name and the second item.
std::pair<std::string, const SExpr*> binding(const SExpr& e) {
  if (e.kind != SExpr::Kind::List || e.items.size() != 2) {
    fail(e, {"("}, "expected a (name form) pair");
  }
  return {identifierAt(e.items[0]), &e.items[1]};
}

// Box constructors of `t` with their paths, outermost first.
void boxPaths(const Type& t, std::vector<int>& path,
              const std::function<void(const Type&, const std::vector<int>&)>& fn) {
  if (t.kind == TypeKind::Box) fn(t, path);
  for (std::size_t i = 0; i < t.args.size(); ++i) {
    int step = 0;
    if (t.kind == TypeKind::Tuple || t.kind == TypeKind::Arrow) step = static_cast<int>(i) + 1;
    path.push_back(step);
    boxPaths(*t.args[i], path, fn);
    path.pop_back();
  }
}

TypePtr applyDecisions(const TypePtr& t, const RemovedAt& removed, std::vector<int>& path) {
  if (t->kind == TypeKind::Box && removed(path)) {
    path.push_back(0);
    TypePtr inner = applyDecisions(t->args[0], removed, path);
    path.pop_back();
    return inner;
  }
  if (t->args.empty()) return t;
  auto n = std::make_shared<Type>(*t);
  for (std::size_t i = 0; i < t->args.size(); ++i) {
    int step = 0;
    if (t->kind == TypeKind::Tuple || t->kind == TypeKind::Arrow) step = static_cast<int>(i) + 1;
    path.push_back(step);
    n->args[i] = applyDecisions(t->args[i], removed, path);
    path.pop_back();
  }
  return n;
}

bool anyRemoved(const Type& t, const RemovedAt& removed, std::vector<int>& path) {
  bool any = false;
  boxPaths(t, path, [&](const Type&, const std::vector<int>& p) { any = any || removed(p); });
  return any;
}

// Builds coercion terms between a type and its rewritten form. Fresh binder
// names contain a '.', so they cannot capture user variables.
class Coercer {
 public:
  explicit Coercer(RemovedAt removed) : removed_(std::move(removed)) {}

  // value : rewritten(t)  ->  term : t
  TermPtr up(const TypePtr& t, TermPtr v) { return convert(t, std::move(v), true); }
  // value : t  ->  term : rewritten(t)
  TermPtr down(const TypePtr& t, TermPtr v) { return convert(t, std::move(v), false); }

 private:
  TermPtr convert(const TypePtr& t, TermPtr v, bool up) {
    if (!anyRemoved(*t, removed_, path_)) return v;
    switch (t->kind) {
      case TypeKind::Box: {
        bool gone = removed_(path_);
        path_.push_back(0);
        TermPtr inner;
        if (up) {
          inner = convert(t->args[0], gone ? v : Term::unbox(v), true);
          inner = Term::box(inner);
        } else {
          inner = convert(t->args[0], Term::unbox(v), false);
          if (!gone) inner = Term::box(inner);
        }
        path_.pop_back();
        return inner;
      }
      case TypeKind::Tuple: {
        std::string tmp = fresh();
        std::vector<TermPtr> fields;
        for (std::size_t i = 0; i < t->args.size(); ++i) {
          path_.push_back(static_cast<int>(i) + 1);
          fields.push_back(convert(t->args[i],
                                   Term::proj(static_cast<std::uint32_t>(i) + 1, Term::var(tmp)),
                                   up));
          path_.pop_back();
        }
        return Term::let(tmp, v, Term::tuple(std::move(fields)));
      }
      case TypeKind::Arrow: {
        std::string param = fresh();
        path_.push_back(1);
        TypePtr domain = up ? stripTypeLabels(t->args[0]) : rewritten(t->args[0]);
        TermPtr arg = convert(t->args[0], Term::var(param), !up);
        path_.pop_back();
        path_.push_back(2);
        TermPtr body = convert(t->args[1], Term::app(v, arg), up);
        path_.pop_back();
        return Term::lam(param, domain, body);
      }
      case TypeKind::Forall: {
        path_.push_back(0);
        TermPtr body = convert(t->args[0], Term::tyApp(v, Type::var(t->name)), up);
        path_.pop_back();
        return Term::tyLam(t->name, body);
      }
      default:
        return v;
    }
  }

  TypePtr rewritten(const TypePtr& t) {
    std::vector<int> p = path_;
    return stripTypeLabels(applyDecisions(t, removed_, p));
  }

  std::string fresh() { return "c." + std::to_string(counter_++); }

  RemovedAt removed_;
  std::vector<int> path_;
  int counter_ = 0;
};

RemovedAt decisionsFor(const InterfaceDescriptor& d, const std::string& name) {
  std::set<std::vector<int>> removed;
  for (const auto& dec : d.decisions) {
    if (dec.name == name && dec.removed) removed.insert(dec.path);
  }
  return [removed](const std::vector<int>& path) { return removed.count(path) > 0; };
}

const std::vector<std::string> kClauses = {"(import ...)", "(def ...)", "(export ...)"};

}  // namespace

const TypePtr* ModuleUnit::exportType(const std::string& n) const {
  for (const auto& [name, type] : exports) {
    if (name == n) return &type;
  }
  return nullptr;
}

LinkError::LinkError(std::string name, TypePtr expected, TypePtr found)
    : Error("link", "import '" + name + "' expects " + printType(*expected) + ", found " +
                        printType(*found)),
      name_(std::move(name)),
      expected_(std::move(expected)),
      found_(std::move(found)) {}

ModuleUnit parseModule(std::string_view text) {
  SExpr e = readSExpr(text);
  if (e.kind != SExpr::Kind::List || e.items.empty() || e.items[0].kind != SExpr::Kind::Atom ||
      e.items[0].atom != "module") {
    fail(e, {"(module ...)"}, "expected a module form");
  }
  if (e.items.size() < 2) {
    throw ParseError(e.endLine, e.endColumn, {"identifier"}, "missing module name");
  }
  ModuleUnit unit;
  unit.name = identifierAt(e.items[1]);

  std::set<std::string> bound;
  std::set<std::string> exportedNames;
  std::set<std::string> defined;
  int phase = 0;  // imports, then defs, then exports
  for (std::size_t i = 2; i < e.items.size(); ++i) {
    const SExpr& clause = e.items[i];
    if (clause.kind != SExpr::Kind::List || clause.items.size() != 2 ||
        clause.items[0].kind != SExpr::Kind::Atom) {
      fail(clause, kClauses, "expected an import, def or export clause");
    }
    const std::string& head = clause.items[0].atom;
    int want = head == "import" ? 0 : head == "def" ? 1 : head == "export" ? 2 : -1;
    if (want < 0) fail(clause.items[0], kClauses, "unknown clause '" + head + "'");
    if (want < phase) {
      fail(clause, std::vector<std::string>(kClauses.begin() + phase, kClauses.end()),
           "'" + head + "' clause out of order");
    }
    phase = want;
    auto [name, body] = binding(clause.items[1]);
    const SExpr& at = clause.items[1].items[0];
    if (want == 0) {
      if (!bound.insert(name).second) throw DuplicateName(at.line, at.column, name);
      unit.imports.emplace_back(name, SyntaxReader().type(*body));
    } else if (want == 1) {
      if (bound.count(name)) throw DuplicateName(at.line, at.column, name);
      TermPtr term = uniquifyBinders(SyntaxReader(bound).term(*body));
      bound.insert(name);
      defined.insert(name);
      unit.definitions.emplace_back(name, term);
    } else {
      if (!exportedNames.insert(name).second) throw DuplicateName(at.line, at.column, name);
      if (!defined.count(name)) throw UndefinedExport(at.line, at.column, name);
      unit.exports.emplace_back(name, SyntaxReader().type(*body));
    }
  }
  return unit;
}

std::string printModule(const ModuleUnit& unit) {
  std::ostringstream out;
  out << "(module " << unit.name;
  for (const auto& [n, t] : unit.imports) out << "\n  (import (" << n << " " << printType(*t) << "))";
  for (const auto& [n, e] : unit.definitions) {
    out << "\n  (def (" << n << " " << printTerm(*e) << "))";
  }
  for (const auto& [n, t] : unit.exports) out << "\n  (export (" << n << " " << printType(*t) << "))";
  out << ")\n";
  return out.str();
}

TypePtr InterfaceDescriptor::apply(const std::string& name, const TypePtr& type) const {
  std::vector<int> path;
  return stripTypeLabels(applyDecisions(type, decisionsFor(*this, name), path));
}

bool InterfaceDescriptor::operator==(const InterfaceDescriptor& o) const {
  if (moduleName != o.moduleName || decisions != o.decisions ||
      rewrittenTypes.size() != o.rewrittenTypes.size()) {
    return false;
  }
  for (const auto& [n, t] : rewrittenTypes) {
    auto it = o.rewrittenTypes.find(n);
    if (it == o.rewrittenTypes.end() || !typeEqual(*t, *it->second)) return false;
  }
  return true;
}

std::string writeDescriptor(const InterfaceDescriptor& d) {
  nlohmann::json out;
  out["module"] = d.moduleName;
  out["decisions"] = nlohmann::json::array();
  for (const auto& dec : d.decisions) {
    out["decisions"].push_back({{"name", dec.name}, {"path", dec.path}, {"removed", dec.removed}});
  }
  out["types"] = nlohmann::json::object();
  for (const auto& [n, t] : d.rewrittenTypes) out["types"][n] = printType(*t);
  return out.dump(2) + "\n";
}

InterfaceDescriptor readDescriptor(std::string_view text) {
  nlohmann::json in;
  try {
    in = nlohmann::json::parse(text);
    InterfaceDescriptor d;
    d.moduleName = in.at("module").get<std::string>();
    for (const auto& dec : in.at("decisions")) {
      d.decisions.push_back({dec.at("name").get<std::string>(),
                             dec.at("path").get<std::vector<int>>(),
                             dec.at("removed").get<bool>()});
    }
    for (const auto& [n, t] : in.at("types").items()) {
      d.rewrittenTypes[n] = parseType(t.get<std::string>());
    }
    return d;
  } catch (const nlohmann::json::exception& e) {
    throw Error("descriptor", std::string("malformed interface descriptor: ") + e.what());
  }
}

TermPtr moduleProgram(const ModuleUnit& unit) {
  std::map<std::string, std::string> names;
  for (const auto& [n, t] : unit.imports) names[n] = local(unit.name, n);
  for (const auto& [n, e] : unit.definitions) names[n] = local(unit.name, n);

  TermPtr body = Term::intLit(0);
  for (auto it = unit.exports.rbegin(); it != unit.exports.rend(); ++it) {
    body = Term::app(Term::lam(exported(unit.name, it->first), it->second, body),
                     Term::var(local(unit.name, it->first)));
  }
  for (auto it = unit.definitions.rbegin(); it != unit.definitions.rend(); ++it) {
    body = Term::let(local(unit.name, it->first), renameFree(it->second, names), body);
  }
  for (auto it = unit.imports.rbegin(); it != unit.imports.rend(); ++it) {
    body = Term::lam(local(unit.name, it->first), it->second, body);
  }
  return body;
}

TypedProgram typecheckModule(const ModuleUnit& unit) {
  return typecheck(assignLabels(moduleProgram(unit)));
}

TermPtr linkTerm(const std::vector<ModuleUnit>& units, const TermPtr& main,
                 const std::map<std::string, InterfaceDescriptor>& descriptors) {
  std::set<std::string> unitNames;
  for (const auto& u : units) {
    if (!unitNames.insert(u.name).second) {
      throw Error("duplicate-unit", "unit '" + u.name + "' is linked twice");
    }
  }
  // Where each exported name currently resolves while scanning units.
  std::map<std::string, std::size_t> provider;
  std::vector<std::function<TermPtr(TermPtr)>> wrappers;

  for (std::size_t k = 0; k < units.size(); ++k) {
    const ModuleUnit& u = units[k];
    std::map<std::string, std::string> names;
    for (const auto& [x, t] : u.imports) {
      auto it = provider.find(x);
      if (it == provider.end()) throw MissingImport(u.name, x);
      const ModuleUnit& p = units[it->second];
      const TypePtr& found = *p.exportType(x);
      TermPtr value = Term::var(exported(p.name, x));
      auto d = descriptors.find(p.name);
      if (d != descriptors.end()) {
        if (!typeEqual(*d->second.apply(x, t), *found)) throw LinkError(x, t, found);
        value = Coercer(decisionsFor(d->second, x)).up(t, value);
      } else if (!typeEqual(*t, *found)) {
        throw LinkError(x, t, found);
      }
      std::string name = local(u.name, x);
      TypePtr type = t;
      wrappers.push_back([name, type, value](TermPtr rest) {
        return Term::app(Term::lam(name, type, rest), value);
      });
      names[x] = name;
    }
    for (const auto& [d, e] : u.definitions) {
      TermPtr bound = renameFree(e, names);
      std::string name = local(u.name, d);
      wrappers.push_back([name, bound](TermPtr rest) { return Term::let(name, bound, rest); });
      names[d] = name;
    }
    for (const auto& [x, t] : u.exports) {
      std::string name = exported(u.name, x);
      std::string source = local(u.name, x);
      TypePtr type = t;
      wrappers.push_back([name, type, source](TermPtr rest) {
        return Term::app(Term::lam(name, type, rest), Term::var(source));
      });
      provider[x] = k;
    }
  }

  std::map<std::string, std::string> names;
  for (const auto& v : freeVars(*main)) {
    auto it = provider.find(v);
    if (it == provider.end()) throw MissingImport("main", v);
    names[v] = exported(units[it->second].name, v);
  }
  TermPtr body = renameFree(main, names);
  for (auto it = wrappers.rbegin(); it != wrappers.rend(); ++it) body = (*it)(body);
  return body;
}

TypedProgram linkUnits(const std::vector<ModuleUnit>& units, const TermPtr& main,
                       const std::map<std::string, InterfaceDescriptor>& descriptors) {
  return typecheck(assignLabels(linkTerm(units, main, descriptors)));
}

namespace {

// Reads the optimized unit back out of its rewritten module program.
ModuleUnit extractUnit(const ModuleUnit& original, const Term& root) {
  ModuleUnit out;
  out.name = original.name;
  std::map<std::string, std::string> names;
  const std::string prefix = original.name + ".";
  auto plain = [&](const std::string& n) { return n.substr(prefix.size()); };
  for (const auto& [n, t] : original.imports) names[local(original.name, n)] = n;
  for (const auto& [n, e] : original.definitions) names[local(original.name, n)] = n;

  const Term* t = &root;
  for (const auto& imp : original.imports) {
    out.imports.emplace_back(imp.first, stripTypeLabels(t->type));
    t = &t->kid(0);
  }
  for (std::size_t i = 0; i < original.definitions.size(); ++i) {
    out.definitions.emplace_back(plain(t->name), renameFree(t->kids[0], names));
    t = &t->kid(1);
  }
  for (const auto& ex : original.exports) {
    const Term& lam = t->kid(0);
    out.exports.emplace_back(ex.first, stripTypeLabels(lam.type));
    t = &lam.kid(0);
  }
  return out;
}

}  // namespace

ModuleOptimization optimizeModule(const ModuleUnit& unit, BoundaryMode mode) {
  TypedProgram tp = typecheckModule(unit);
  const LabeledProgram& p = tp.program;

  // Annotated boundary binders in program order: imports, then exports.
  std::vector<std::pair<std::string, const Term*>> boundary;
  const Term* t = p.root().get();
  for (const auto& imp : unit.imports) {
    boundary.emplace_back(imp.first, t);
    t = &t->kid(0);
  }
  for (std::size_t i = 0; i < unit.definitions.size(); ++i) t = &t->kid(1);
  for (const auto& ex : unit.exports) {
    boundary.emplace_back(ex.first, &t->kid(0));
    t = &t->kid(0).kid(0);
  }

  PinPolicy policy;
  for (std::size_t i = 0; i < boundary.size(); ++i) {
    bool isImport = i < unit.imports.size();
    if (!isImport && mode == BoundaryMode::Descriptor) continue;
    std::vector<int> path;
    boxPaths(*boundary[i].second->type, path,
             [&](const Type& box, const std::vector<int>&) { policy.boundary.insert(box.pos); });
  }

  Optimized opt = optimize(tp, policy);
  ModuleOptimization out{extractUnit(unit, *opt.program.program.root()), {}, opt.report};
  out.descriptor.moduleName = unit.name;
  for (const auto& [name, lam] : boundary) {
    std::vector<int> path;
    boxPaths(*lam->type, path, [&](const Type& box, const std::vector<int>& at) {
      out.descriptor.decisions.push_back({name, at, opt.removal.typePositions.count(box.pos) > 0});
    });
  }
  std::sort(out.descriptor.decisions.begin(), out.descriptor.decisions.end(),
            [](const BoundaryDecision& a, const BoundaryDecision& b) {
              return std::tie(a.name, a.path) < std::tie(b.name, b.path);
            });
  for (const auto& [n, type] : out.unit.imports) out.descriptor.rewrittenTypes[n] = type;
  for (const auto& [n, type] : out.unit.exports) out.descriptor.rewrittenTypes[n] = type;
  return out;
}

RemovedAt removedIn(const InterfaceDescriptor& d, const std::string& name) {
  return decisionsFor(d, name);
}

TermPtr coerceUp(const TypePtr& original, const RemovedAt& removed, const TermPtr& value) {
  return Coercer(removed).up(original, value);
}

TermPtr coerceDown(const TypePtr& original, const RemovedAt& removed, const TermPtr& value) {
  return Coercer(removed).down(original, value);
}

HarnessVerdict contextualHarness(const ModuleUnit& original, const ModuleUnit& optimized,
                                 const std::optional<InterfaceDescriptor>& descriptor,
                                 std::size_t trials, std::uint64_t seed,
                                 const std::vector<ModuleUnit>& providers) {
  HarnessVerdict verdict;
  verdict.trials = trials;
  if (trials == 0) return verdict;

  TypeEnv env(original.exports.begin(), original.exports.end());
  std::string clientName = "client";
  while (clientName == original.name) clientName += "_";
  std::map<std::string, InterfaceDescriptor> descriptors;
  if (descriptor) descriptors[optimized.name] = *descriptor;
  const TermPtr main = Term::var("result");

  for (std::size_t i = 0; i < trials; ++i) {
    GenConfig cfg;
    cfg.seed = seed + i;
    cfg.maxDepth = 4 + static_cast<unsigned>(i % 3);
    std::optional<TermPtr> body = generateOpen(cfg, env);
    if (!body) {
      throw GenerationExhausted("no well-typed client of module '" + original.name +
                                "' found for seed " + std::to_string(cfg.seed));
    }
    ModuleUnit client;
    client.name = clientName;
    client.imports = env;
    client.definitions = {{"result", *body}};
    client.exports = {{"result", Type::intT()}};

    auto fail = [&](const std::string& detail) {
      verdict.pass = false;
      verdict.firstFailure = i;
      verdict.failureSeed = cfg.seed;
      verdict.detail = detail + "\nclient: " + printTerm(**body);
    };
    try {
      std::vector<ModuleUnit> before = providers;
      std::vector<ModuleUnit> after = providers;
      before.push_back(original);
      before.push_back(client);
      after.push_back(optimized);
      after.push_back(client);
      Outcome a = run(linkUnits(before, main));
      Outcome b = run(linkUnits(after, main, descriptors));
      if (!a.sameAs(b)) {
        fail("outcomes differ: " + a.describe() + " vs " + b.describe());
        return verdict;
      }
    } catch (const Error& e) {
      fail(e.render());
      return verdict;
    }
  }
  return verdict;
}

}  // namespace ubx
