#include "ubx/typing.hpp"

#include <algorithm>

namespace ubx {

std::string_view traceabilityName(Traceability t) {
  return t == Traceability::Bits ? "bits" : "ref";
}

Traceability traceability(const Type& t) {
  switch (t.kind) {
    case TypeKind::Int:
    case TypeKind::Float:
      return Traceability::Bits;
    default:
      return Traceability::Ref;
  }
}

TypeError::TypeError(LabelId label, std::string expected, std::string found)
    : LabeledError("type-mismatch", label,
                   "expected " + expected + ", found " + found),
      expected_(std::move(expected)),
      found_(std::move(found)) {}

InstantiationAtBitsType::InstantiationAtBitsType(LabelId label, TypePtr type)
    : LabeledError("bits-instantiation", label,
                   "type application at bits type " + printType(*type)),
      type_(std::move(type)) {}

const Type& TypedProgram::typeAt(LabelId id) const {
  if (id >= typeOf.size() || !typeOf[id]) {
    throw LabeledError("untyped-label", id, "label has no type");
  }
  return *typeOf[id];
}

namespace {

class Checker {
 public:
  explicit Checker(TypedProgram& out) : out_(out) {
    out_.typeOf.assign(out_.program.labelCount(), nullptr);
  }

  TypePtr check(const Term& t) {
    TypePtr ty = infer(t);
    out_.typeOf[t.label] = ty;
    return ty;
  }

 private:
  TypePtr infer(const Term& t) {
    switch (t.kind) {
      case TermKind::IntLit:
        return Type::intT();
      case TermKind::FloatLit:
        return Type::floatT();
      case TermKind::Var: {
        if (t.binder == kNoLabel || t.binder >= out_.typeOf.size() ||
            !out_.typeOf[t.binder]) {
          throw LabeledError("unbound-variable", t.label,
                             "unbound variable '" + t.name + "'");
        }
        return out_.typeOf[t.binder];
      }
      case TermKind::Lam: {
        checkScoped(*t.type, t.label);
        out_.typeOf[t.binder] = t.type;
        TypePtr body = check(t.kid(0));
        return Type::arrow(t.type, body);
      }
      case TermKind::App: {
        TypePtr fn = check(t.kid(0));
        TypePtr arg = check(t.kid(1));
        if (fn->kind != TypeKind::Arrow) {
          throw TypeError(t.kid(0).label, "(-> _ _)", printType(*fn));
        }
        requireEqual(*fn->args[0], *arg, t.kid(1).label);
        return fn->args[1];
      }
      case TermKind::TyLam: {
        tyScope_.push_back(t.name);
        TypePtr body = check(t.kid(0));
        tyScope_.pop_back();
        return Type::forall(t.name, body);
      }
      case TermKind::TyApp: {
        TypePtr fn = check(t.kid(0));
        checkScoped(*t.type, t.label);
        if (fn->kind != TypeKind::Forall) {
          throw TypeError(t.kid(0).label, "(forall (_) _)", printType(*fn));
        }
        if (traceability(*t.type) != Traceability::Ref) {
          throw InstantiationAtBitsType(t.label, t.type);
        }
        return substitute(fn->args[0], fn->name, t.type);
      }
      case TermKind::Box:
        return Type::box(check(t.kid(0)), t.label);
      case TermKind::Unbox: {
        TypePtr inner = check(t.kid(0));
        if (inner->kind != TypeKind::Box) {
          throw TypeError(t.label, "(box _)", printType(*inner));
        }
        link(t.label, inner->pos);
        return inner->args[0];
      }
      case TermKind::Tuple: {
        std::vector<TypePtr> fields;
        for (const auto& k : t.kids) fields.push_back(check(*k));
        return Type::tuple(std::move(fields));
      }
      case TermKind::Proj: {
        TypePtr inner = check(t.kid(0));
        if (inner->kind != TypeKind::Tuple || inner->args.size() < t.index) {
          throw TypeError(t.label,
                          "(tuple ...) with at least " + std::to_string(t.index) +
                              " fields",
                          printType(*inner));
        }
        return inner->args[t.index - 1];
      }
      case TermKind::Let: {
        out_.typeOf[t.binder] = check(t.kid(0));
        return check(t.kid(1));
      }
      case TermKind::Prim: {
        TypePtr operand = isFloatOp(t.op) ? Type::floatT() : Type::intT();
        TypePtr lhs = check(t.kid(0));
        TypePtr rhs = check(t.kid(1));
        requireEqual(*operand, *lhs, t.kid(0).label);
        requireEqual(*operand, *rhs, t.kid(1).label);
        return operand;
      }
      case TermKind::Ifz: {
        TypePtr cond = check(t.kid(0));
        requireEqual(*Type::intT(), *cond, t.kid(0).label);
        TypePtr then = check(t.kid(1));
        TypePtr otherwise = check(t.kid(2));
        requireEqual(*then, *otherwise, t.kid(2).label);
        return then;
      }
    }
    throw InternalError("bad-term", "unknown term kind");
  }

  void checkScoped(const Type& ty, LabelId at) {
    for (const auto& v : freeTypeVars(ty)) {
      if (std::find(tyScope_.begin(), tyScope_.end(), v) == tyScope_.end()) {
        throw LabeledError("unbound-type-variable", at,
                           "unbound type variable '" + v + "'");
      }
    }
  }

  void requireEqual(const Type& expected, const Type& found, LabelId at) {
    if (!typeEqual(expected, found)) {
      throw TypeError(at, printType(expected), printType(found));
    }
    linkTypes(expected, found);
  }

  // Both types are already known to be alpha-equal.
  void linkTypes(const Type& a, const Type& b) {
    if (a.kind == TypeKind::Box) link(a.pos, b.pos);
    for (std::size_t i = 0; i < a.args.size(); ++i) {
      linkTypes(*a.args[i], *b.args[i]);
    }
  }

  void link(LabelId a, LabelId b) {
    if (a == kNoLabel || b == kNoLabel || a == b) return;
    out_.typeLinks.emplace_back(std::min(a, b), std::max(a, b));
  }

  TypedProgram& out_;
  std::vector<std::string> tyScope_;
};

}  // namespace

TypedProgram typecheck(const LabeledProgram& program) {
  TypedProgram out;
  out.program = program;
  Checker checker(out);
  out.resultType = checker.check(*program.root());
  std::sort(out.typeLinks.begin(), out.typeLinks.end());
  out.typeLinks.erase(std::unique(out.typeLinks.begin(), out.typeLinks.end()),
                      out.typeLinks.end());
  return out;
}

TypedProgram typecheckSource(std::string_view text) {
  return typecheck(assignLabels(parse(text)));
}

MetadataTable metadataOf(const TypedProgram& tp) {
  MetadataTable table;
  const LabeledProgram& p = tp.program;
  table.values.assign(p.labelCount(), Traceability::Bits);
  for (LabelId id = 0; id < p.labelCount(); ++id) {
    if (!p.hasLabel(id)) continue;
    const LabelInfo& info = p.info(id);
    if (info.kind == LabelKind::TypePos) continue;
    if (info.kind == LabelKind::Binder) {
      table.binders[id] = traceability(tp.typeAt(id));
      continue;
    }
    table.values[id] = traceability(tp.typeAt(id));
    const Term& t = *info.term;
    if (t.kind == TermKind::Box) {
      table.boxContents[id] = traceability(tp.typeAt(t.kid(0).label));
    } else if (t.kind == TermKind::Tuple) {
      auto& tags = table.tupleFields[id];
      for (const auto& k : t.kids) tags.push_back(traceability(tp.typeAt(k->label)));
    }
  }
  return table;
}

}  // namespace ubx
