#include "ubx/syntax.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>
#include <unordered_map>
#include <utility>

namespace ubx {

std::string_view labelKindName(LabelKind kind) {
  switch (kind) {
    case LabelKind::BoxOp: return "BoxOp";
    case LabelKind::UnboxOp: return "UnboxOp";
    case LabelKind::Lambda: return "Lambda";
    case LabelKind::TyLambda: return "TyLambda";
    case LabelKind::Tuple: return "Tuple";
    case LabelKind::Literal: return "Literal";
    case LabelKind::TypePos: return "TypePos";
    case LabelKind::Binder: return "Binder";
    case LabelKind::Use: return "Use";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

namespace {

TypePtr makeType(TypeKind kind, std::vector<TypePtr> args = {},
                 std::string name = {}, LabelId pos = kNoLabel) {
  auto t = std::make_shared<Type>();
  t->kind = kind;
  t->args = std::move(args);
  t->name = std::move(name);
  t->pos = pos;
  return t;
}

}  // namespace

TypePtr Type::intT() {
  static const TypePtr t = makeType(TypeKind::Int);
  return t;
}
TypePtr Type::floatT() {
  static const TypePtr t = makeType(TypeKind::Float);
  return t;
}
TypePtr Type::box(TypePtr content, LabelId pos) {
  return makeType(TypeKind::Box, {std::move(content)}, {}, pos);
}
TypePtr Type::tuple(std::vector<TypePtr> fields) {
  return makeType(TypeKind::Tuple, std::move(fields));
}
TypePtr Type::arrow(TypePtr from, TypePtr to) {
  return makeType(TypeKind::Arrow, {std::move(from), std::move(to)});
}
TypePtr Type::forall(std::string var, TypePtr body) {
  return makeType(TypeKind::Forall, {std::move(body)}, std::move(var));
}
TypePtr Type::var(std::string name) {
  return makeType(TypeKind::Var, {}, std::move(name));
}

namespace {

using NamePairs = std::vector<std::pair<std::string, std::string>>;

bool typeEqualIn(const Type& a, const Type& b, NamePairs& bound) {
  if (a.kind != b.kind) return false;
  switch (a.kind) {
    case TypeKind::Int:
    case TypeKind::Float:
      return true;
    case TypeKind::Var: {
      for (auto it = bound.rbegin(); it != bound.rend(); ++it) {
        bool left = it->first == a.name;
        bool right = it->second == b.name;
        if (left || right) return left && right;
      }
      return a.name == b.name;
    }
    case TypeKind::Forall: {
      bound.emplace_back(a.name, b.name);
      bool eq = typeEqualIn(*a.args[0], *b.args[0], bound);
      bound.pop_back();
      return eq;
    }
    default:
      if (a.args.size() != b.args.size()) return false;
      for (std::size_t i = 0; i < a.args.size(); ++i) {
        if (!typeEqualIn(*a.args[i], *b.args[i], bound)) return false;
      }
      return true;
  }
}

void collectFreeTypeVars(const Type& t, std::vector<std::string>& bound,
                         std::set<std::string>& out) {
  if (t.kind == TypeKind::Var) {
    if (std::find(bound.begin(), bound.end(), t.name) == bound.end()) {
      out.insert(t.name);
    }
    return;
  }
  if (t.kind == TypeKind::Forall) bound.push_back(t.name);
  for (const auto& a : t.args) collectFreeTypeVars(*a, bound, out);
  if (t.kind == TypeKind::Forall) bound.pop_back();
}

void collectTypeNames(const Type& t, std::set<std::string>& out) {
  if (t.kind == TypeKind::Var || t.kind == TypeKind::Forall) out.insert(t.name);
  for (const auto& a : t.args) collectTypeNames(*a, out);
}

std::string freshName(const std::string& base, const std::set<std::string>& avoid) {
  for (int i = 1;; ++i) {
    std::string candidate = base + "_" + std::to_string(i);
    if (!avoid.count(candidate)) return candidate;
  }
}

}  // namespace

bool typeEqual(const Type& a, const Type& b) {
  NamePairs bound;
  return typeEqualIn(a, b, bound);
}

std::set<std::string> freeTypeVars(const Type& type) {
  std::set<std::string> out;
  std::vector<std::string> bound;
  collectFreeTypeVars(type, bound, out);
  return out;
}

TypePtr substitute(const TypePtr& type, const std::string& var,
                   const TypePtr& replacement) {
  switch (type->kind) {
    case TypeKind::Int:
    case TypeKind::Float:
      return type;
    case TypeKind::Var:
      return type->name == var ? replacement : type;
    case TypeKind::Forall: {
      if (type->name == var) return type;
      auto replFree = freeTypeVars(*replacement);
      if (replFree.count(type->name)) {
        std::set<std::string> avoid = replFree;
        collectTypeNames(*type, avoid);
        avoid.insert(var);
        std::string fresh = freshName(type->name, avoid);
        TypePtr body = substitute(type->args[0], type->name, Type::var(fresh));
        return Type::forall(fresh, substitute(body, var, replacement));
      }
      TypePtr body = substitute(type->args[0], var, replacement);
      if (body == type->args[0]) return type;
      return Type::forall(type->name, body);
    }
    default: {
      std::vector<TypePtr> args;
      bool changed = false;
      for (const auto& a : type->args) {
        args.push_back(substitute(a, var, replacement));
        changed |= args.back() != a;
      }
      if (!changed) return type;
      return makeType(type->kind, std::move(args), type->name, type->pos);
    }
  }
}

TypePtr stripTypeLabels(const TypePtr& type) {
  std::vector<TypePtr> args;
  for (const auto& a : type->args) args.push_back(stripTypeLabels(a));
  return makeType(type->kind, std::move(args), type->name, kNoLabel);
}

// ---------------------------------------------------------------------------
// Terms
// ---------------------------------------------------------------------------

std::string_view primOpName(PrimOp op) {
  switch (op) {
    case PrimOp::Add: return "+";
    case PrimOp::Sub: return "-";
    case PrimOp::Mul: return "*";
    case PrimOp::FAdd: return "+.";
    case PrimOp::FMul: return "*.";
  }
  return "?";
}

bool isFloatOp(PrimOp op) { return op == PrimOp::FAdd || op == PrimOp::FMul; }

namespace {

std::shared_ptr<Term> makeTerm(TermKind kind, std::vector<TermPtr> kids = {}) {
  auto t = std::make_shared<Term>();
  t->kind = kind;
  t->kids = std::move(kids);
  return t;
}

}  // namespace

TermPtr Term::intLit(std::int64_t value) {
  auto t = makeTerm(TermKind::IntLit);
  t->intValue = value;
  return t;
}
TermPtr Term::floatLit(double value) {
  auto t = makeTerm(TermKind::FloatLit);
  t->floatValue = value;
  return t;
}
TermPtr Term::var(std::string name) {
  auto t = makeTerm(TermKind::Var);
  t->name = std::move(name);
  return t;
}
TermPtr Term::lam(std::string param, TypePtr annotation, TermPtr body) {
  auto t = makeTerm(TermKind::Lam, {std::move(body)});
  t->name = std::move(param);
  t->type = std::move(annotation);
  return t;
}
TermPtr Term::app(TermPtr fn, TermPtr arg) {
  return makeTerm(TermKind::App, {std::move(fn), std::move(arg)});
}
TermPtr Term::tyLam(std::string tyvar, TermPtr body) {
  auto t = makeTerm(TermKind::TyLam, {std::move(body)});
  t->name = std::move(tyvar);
  return t;
}
TermPtr Term::tyApp(TermPtr fn, TypePtr arg) {
  auto t = makeTerm(TermKind::TyApp, {std::move(fn)});
  t->type = std::move(arg);
  return t;
}
TermPtr Term::box(TermPtr e) { return makeTerm(TermKind::Box, {std::move(e)}); }
TermPtr Term::unbox(TermPtr e) {
  return makeTerm(TermKind::Unbox, {std::move(e)});
}
TermPtr Term::tuple(std::vector<TermPtr> fields) {
  return makeTerm(TermKind::Tuple, std::move(fields));
}
TermPtr Term::proj(std::uint32_t index, TermPtr e) {
  auto t = makeTerm(TermKind::Proj, {std::move(e)});
  t->index = index;
  return t;
}
TermPtr Term::let(std::string name, TermPtr bound, TermPtr body) {
  auto t = makeTerm(TermKind::Let, {std::move(bound), std::move(body)});
  t->name = std::move(name);
  return t;
}
TermPtr Term::prim(PrimOp op, TermPtr lhs, TermPtr rhs) {
  auto t = makeTerm(TermKind::Prim, {std::move(lhs), std::move(rhs)});
  t->op = op;
  return t;
}
TermPtr Term::ifz(TermPtr cond, TermPtr then, TermPtr otherwise) {
  return makeTerm(TermKind::Ifz,
                  {std::move(cond), std::move(then), std::move(otherwise)});
}

namespace {

struct AlphaEnv {
  NamePairs vars;
  NamePairs tyvars;
};

bool lookupPaired(const NamePairs& pairs, const std::string& a,
                  const std::string& b) {
  for (auto it = pairs.rbegin(); it != pairs.rend(); ++it) {
    bool left = it->first == a;
    bool right = it->second == b;
    if (left || right) return left && right;
  }
  return a == b;
}

bool alphaEqualIn(const Term& a, const Term& b, AlphaEnv& env) {
  if (a.kind != b.kind || a.kids.size() != b.kids.size()) return false;
  auto typesEqual = [&](const Type& x, const Type& y) {
    NamePairs bound = env.tyvars;
    return typeEqualIn(x, y, bound);
  };
  switch (a.kind) {
    case TermKind::IntLit:
      return a.intValue == b.intValue;
    case TermKind::FloatLit:
      return a.floatValue == b.floatValue ||
             (std::isnan(a.floatValue) && std::isnan(b.floatValue));
    case TermKind::Var:
      return lookupPaired(env.vars, a.name, b.name);
    case TermKind::Lam: {
      if (!typesEqual(*a.type, *b.type)) return false;
      env.vars.emplace_back(a.name, b.name);
      bool eq = alphaEqualIn(a.kid(0), b.kid(0), env);
      env.vars.pop_back();
      return eq;
    }
    case TermKind::Let: {
      if (!alphaEqualIn(a.kid(0), b.kid(0), env)) return false;
      env.vars.emplace_back(a.name, b.name);
      bool eq = alphaEqualIn(a.kid(1), b.kid(1), env);
      env.vars.pop_back();
      return eq;
    }
    case TermKind::TyLam: {
      env.tyvars.emplace_back(a.name, b.name);
      bool eq = alphaEqualIn(a.kid(0), b.kid(0), env);
      env.tyvars.pop_back();
      return eq;
    }
    case TermKind::TyApp:
      return typesEqual(*a.type, *b.type) && alphaEqualIn(a.kid(0), b.kid(0), env);
    case TermKind::Proj:
      return a.index == b.index && alphaEqualIn(a.kid(0), b.kid(0), env);
    case TermKind::Prim:
      if (a.op != b.op) return false;
      [[fallthrough]];
    default:
      for (std::size_t i = 0; i < a.kids.size(); ++i) {
        if (!alphaEqualIn(a.kid(i), b.kid(i), env)) return false;
      }
      return true;
  }
}

void collectFreeVars(const Term& t, std::vector<std::string>& bound,
                     std::set<std::string>& out) {
  switch (t.kind) {
    case TermKind::Var:
      if (std::find(bound.begin(), bound.end(), t.name) == bound.end()) {
        out.insert(t.name);
      }
      return;
    case TermKind::Lam:
      bound.push_back(t.name);
      collectFreeVars(t.kid(0), bound, out);
      bound.pop_back();
      return;
    case TermKind::Let:
      collectFreeVars(t.kid(0), bound, out);
      bound.push_back(t.name);
      collectFreeVars(t.kid(1), bound, out);
      bound.pop_back();
      return;
    default:
      for (const auto& k : t.kids) collectFreeVars(*k, bound, out);
  }
}

}  // namespace

bool alphaEqual(const Term& a, const Term& b) {
  AlphaEnv env;
  return alphaEqualIn(a, b, env);
}

std::set<std::string> freeVars(const Term& term) {
  std::set<std::string> out;
  std::vector<std::string> bound;
  collectFreeVars(term, bound, out);
  return out;
}

std::size_t termSize(const Term& term) {
  std::size_t n = 1;
  for (const auto& k : term.kids) n += termSize(*k);
  return n;
}

// ---------------------------------------------------------------------------
// Reader
// ---------------------------------------------------------------------------

namespace {

struct Token {
  enum class Kind { LParen, RParen, Colon, Atom, End } kind = Kind::End;
  std::string text;
  int line = 1;
  int column = 1;
};

class Lexer {
 public:
  explicit Lexer(std::string_view text) : text_(text) {}

  Token next() {
    skipTrivia();
    Token tok;
    tok.line = line_;
    tok.column = column_;
    if (pos_ >= text_.size()) return tok;
    char c = text_[pos_];
    if (c == '(' || c == ')' || c == ':') {
      advance();
      tok.kind = c == '(' ? Token::Kind::LParen
                 : c == ')' ? Token::Kind::RParen
                            : Token::Kind::Colon;
      tok.text = std::string(1, c);
      return tok;
    }
    tok.kind = Token::Kind::Atom;
    while (pos_ < text_.size() && !isDelimiter(text_[pos_])) {
      tok.text.push_back(text_[pos_]);
      advance();
    }
    return tok;
  }

 private:
  static bool isDelimiter(char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == '(' || c == ')' ||
           c == ';' || c == ':';
  }

  void advance() {
    if (text_[pos_] == '\n') {
      ++line_;
      column_ = 1;
    } else {
      ++column_;
    }
    ++pos_;
  }

  void skipTrivia() {
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ';') {
        while (pos_ < text_.size() && text_[pos_] != '\n') advance();
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        advance();
      } else {
        break;
      }
    }
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  int line_ = 1;
  int column_ = 1;
};

SExpr readDatum(Lexer& lexer, Token tok) {
  SExpr e;
  e.line = tok.line;
  e.column = tok.column;
  switch (tok.kind) {
    case Token::Kind::Atom:
    case Token::Kind::Colon:
      e.kind = SExpr::Kind::Atom;
      e.atom = tok.text;
      return e;
    case Token::Kind::LParen: {
      e.kind = SExpr::Kind::List;
      for (;;) {
        Token t = lexer.next();
        if (t.kind == Token::Kind::End) {
          throw ParseError(t.line, t.column, {")", "(", "atom"},
                           "unexpected end of input");
        }
        if (t.kind == Token::Kind::RParen) {
          e.endLine = t.line;
          e.endColumn = t.column;
          return e;
        }
        e.items.push_back(readDatum(lexer, t));
      }
    }
    case Token::Kind::RParen:
      throw ParseError(tok.line, tok.column, {"(", "atom"}, "unexpected ')'");
    case Token::Kind::End:
      throw ParseError(tok.line, tok.column, {"(", "atom"},
                       "unexpected end of input");
  }
  return e;
}

}  // namespace

SExpr readSExpr(std::string_view text) {
  Lexer lexer(text);
  SExpr e = readDatum(lexer, lexer.next());
  Token trailing = lexer.next();
  if (trailing.kind != Token::Kind::End) {
    throw ParseError(trailing.line, trailing.column, {"end of input"},
                     "unexpected trailing input '" + trailing.text + "'");
  }
  return e;
}

bool isKeyword(std::string_view word) {
  static const std::set<std::string_view> kKeywords = {
      "lam",   "app",   "tylam", "tyapp",  "box",    "unbox",  "tuple",
      "proj",  "let",   "prim",  "ifz",    "int",    "float",  "forall",
      "module", "import", "def", "export", "->"};
  return kKeywords.count(word) > 0;
}

bool isIdentifier(std::string_view word) {
  if (word.empty() || isKeyword(word)) return false;
  unsigned char first = static_cast<unsigned char>(word[0]);
  if (!std::isalpha(first) && word[0] != '_') return false;
  return std::all_of(word.begin(), word.end(), [](char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '\'';
  });
}

namespace {

[[noreturn]] void fail(const SExpr& at, std::vector<std::string> expected,
                       const std::string& message) {
  throw ParseError(at.line, at.column, std::move(expected), message);
}

const SExpr& item(const SExpr& list, std::size_t i,
                  std::vector<std::string> expected) {
  if (i >= list.items.size()) {
    throw ParseError(list.endLine, list.endColumn, std::move(expected),
                     "form ended early");
  }
  return list.items[i];
}

void expectArity(const SExpr& list, std::size_t n) {
  if (list.items.size() > n) {
    fail(list.items[n], {")"}, "too many operands");
  }
}

std::string identifier(const SExpr& e) {
  if (e.kind != SExpr::Kind::Atom || !isIdentifier(e.atom)) {
    fail(e, {"identifier"}, "expected an identifier");
  }
  return e.atom;
}

void expectColon(const SExpr& e) {
  if (e.kind != SExpr::Kind::Atom || e.atom != ":") fail(e, {":"}, "expected ':'");
}

std::optional<std::int64_t> asInt(std::string_view s) {
  std::int64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

bool looksNumeric(std::string_view s) {
  std::size_t i = (s.size() > 1 && s[0] == '-') ? 1 : 0;
  return i < s.size() && std::isdigit(static_cast<unsigned char>(s[i]));
}

}  // namespace

TypePtr SyntaxReader::type(const SExpr& e) {
  const std::vector<std::string> kTypeStart = {"int", "float", "type variable",
                                               "("};
  if (e.kind == SExpr::Kind::Atom) {
    if (e.atom == "int") return Type::intT();
    if (e.atom == "float") return Type::floatT();
    std::string name = identifier(e);
    if (std::find(tyScope_.begin(), tyScope_.end(), name) == tyScope_.end()) {
      throw UnboundVariable(e.line, e.column, name);
    }
    return Type::var(name);
  }
  const SExpr& head = item(e, 0, {"box", "tuple", "->", "forall"});
  std::string h = head.kind == SExpr::Kind::Atom ? head.atom : "";
  if (h == "box") {
    expectArity(e, 2);
    return Type::box(type(item(e, 1, kTypeStart)));
  }
  if (h == "tuple") {
    std::vector<TypePtr> fields;
    for (std::size_t i = 1; i < e.items.size(); ++i) fields.push_back(type(e.items[i]));
    return Type::tuple(std::move(fields));
  }
  if (h == "->") {
    expectArity(e, 3);
    TypePtr from = type(item(e, 1, kTypeStart));
    TypePtr to = type(item(e, 2, kTypeStart));
    return Type::arrow(std::move(from), std::move(to));
  }
  if (h == "forall") {
    expectArity(e, 3);
    const SExpr& binder = item(e, 1, {"("});
    if (binder.kind != SExpr::Kind::List || binder.items.size() != 1) {
      fail(binder, {"(<tyvar>)"}, "expected a single type-variable binder");
    }
    std::string name = identifier(binder.items[0]);
    tyScope_.push_back(name);
    TypePtr body = type(item(e, 2, kTypeStart));
    tyScope_.pop_back();
    return Type::forall(name, std::move(body));
  }
  fail(head, {"box", "tuple", "->", "forall"}, "unknown type form");
}

TermPtr SyntaxReader::term(const SExpr& e) {
  const std::vector<std::string> kTermStart = {"integer", "float", "identifier",
                                               "("};
  if (e.kind == SExpr::Kind::Atom) {
    if (looksNumeric(e.atom)) {
      if (auto v = asInt(e.atom)) return Term::intLit(*v);
      double d = 0;
      auto [ptr, ec] = std::from_chars(e.atom.data(), e.atom.data() + e.atom.size(), d);
      if (ec == std::errc() && ptr == e.atom.data() + e.atom.size() &&
          std::isfinite(d)) {
        return Term::floatLit(d);
      }
      fail(e, {"integer", "float"}, "malformed numeric literal '" + e.atom + "'");
    }
    std::string name = identifier(e);
    if (std::find(scope_.begin(), scope_.end(), name) == scope_.end() &&
        !freeNames_.count(name)) {
      throw UnboundVariable(e.line, e.column, name);
    }
    return Term::var(name);
  }
  const std::vector<std::string> kForms = {"lam", "app", "tylam", "tyapp",
                                           "box", "unbox", "tuple", "proj",
                                           "let", "prim", "ifz"};
  const SExpr& head = item(e, 0, kForms);
  if (head.kind != SExpr::Kind::Atom) fail(head, kForms, "expected a keyword");
  const std::string& h = head.atom;
  if (h == "lam") {
    expectArity(e, 3);
    const SExpr& binding = item(e, 1, {"("});
    if (binding.kind != SExpr::Kind::List) fail(binding, {"("}, "expected (x : T)");
    std::string name = identifier(item(binding, 0, {"identifier"}));
    expectColon(item(binding, 1, {":"}));
    TypePtr annotation = type(item(binding, 2, {"type"}));
    expectArity(binding, 3);
    scope_.push_back(name);
    TermPtr body = term(item(e, 2, kTermStart));
    scope_.pop_back();
    return Term::lam(name, std::move(annotation), std::move(body));
  }
  if (h == "app") {
    expectArity(e, 3);
    TermPtr fn = term(item(e, 1, kTermStart));
    TermPtr arg = term(item(e, 2, kTermStart));
    return Term::app(std::move(fn), std::move(arg));
  }
  if (h == "tylam") {
    expectArity(e, 3);
    const SExpr& binder = item(e, 1, {"("});
    if (binder.kind != SExpr::Kind::List || binder.items.size() != 1) {
      fail(binder, {"(<tyvar>)"}, "expected a single type-variable binder");
    }
    std::string name = identifier(binder.items[0]);
    tyScope_.push_back(name);
    TermPtr body = term(item(e, 2, kTermStart));
    tyScope_.pop_back();
    return Term::tyLam(name, std::move(body));
  }
  if (h == "tyapp") {
    expectArity(e, 3);
    TermPtr fn = term(item(e, 1, kTermStart));
    TypePtr arg = type(item(e, 2, {"type"}));
    return Term::tyApp(std::move(fn), std::move(arg));
  }
  if (h == "box" || h == "unbox") {
    expectArity(e, 2);
    TermPtr inner = term(item(e, 1, kTermStart));
    return h == "box" ? Term::box(std::move(inner)) : Term::unbox(std::move(inner));
  }
  if (h == "tuple") {
    std::vector<TermPtr> fields;
    for (std::size_t i = 1; i < e.items.size(); ++i) fields.push_back(term(e.items[i]));
    return Term::tuple(std::move(fields));
  }
  if (h == "proj") {
    expectArity(e, 3);
    const SExpr& idx = item(e, 1, {"positive integer"});
    std::optional<std::int64_t> v;
    if (idx.kind == SExpr::Kind::Atom) v = asInt(idx.atom);
    if (!v || *v < 1 || *v > 0xffff) {
      fail(idx, {"positive integer"}, "projection index must be a positive integer");
    }
    TermPtr inner = term(item(e, 2, kTermStart));
    return Term::proj(static_cast<std::uint32_t>(*v), std::move(inner));
  }
  if (h == "let") {
    expectArity(e, 3);
    const SExpr& binding = item(e, 1, {"("});
    if (binding.kind != SExpr::Kind::List) fail(binding, {"("}, "expected (x e)");
    std::string name = identifier(item(binding, 0, {"identifier"}));
    TermPtr bound = term(item(binding, 1, kTermStart));
    expectArity(binding, 2);
    scope_.push_back(name);
    TermPtr body = term(item(e, 2, kTermStart));
    scope_.pop_back();
    return Term::let(name, std::move(bound), std::move(body));
  }
  if (h == "prim") {
    expectArity(e, 4);
    const SExpr& opTok = item(e, 1, {"+", "-", "*", "+.", "*."});
    static const std::map<std::string, PrimOp> kOps = {
        {"+", PrimOp::Add}, {"-", PrimOp::Sub}, {"*", PrimOp::Mul},
        {"+.", PrimOp::FAdd}, {"*.", PrimOp::FMul}};
    auto it = opTok.kind == SExpr::Kind::Atom ? kOps.find(opTok.atom) : kOps.end();
    if (it == kOps.end()) fail(opTok, {"+", "-", "*", "+.", "*."}, "unknown primitive");
    TermPtr lhs = term(item(e, 2, kTermStart));
    TermPtr rhs = term(item(e, 3, kTermStart));
    return Term::prim(it->second, std::move(lhs), std::move(rhs));
  }
  if (h == "ifz") {
    expectArity(e, 4);
    TermPtr c = term(item(e, 1, kTermStart));
    TermPtr t = term(item(e, 2, kTermStart));
    TermPtr f = term(item(e, 3, kTermStart));
    return Term::ifz(std::move(c), std::move(t), std::move(f));
  }
  fail(head, kForms, "unknown form '" + h + "'");
}

TermPtr parse(std::string_view text) { return parseOpen(text, {}); }

TermPtr parseOpen(std::string_view text, const std::set<std::string>& freeNames) {
  SyntaxReader reader(freeNames);
  return uniquifyBinders(reader.term(readSExpr(text)));
}

TypePtr parseType(std::string_view text) {
  SyntaxReader reader;
  return reader.type(readSExpr(text));
}

// ---------------------------------------------------------------------------
// Alpha renaming
// ---------------------------------------------------------------------------

namespace {

void collectAllNames(const Term& t, std::set<std::string>& names) {
  if (!t.name.empty()) names.insert(t.name);
  if (t.type) collectTypeNames(*t.type, names);
  for (const auto& k : t.kids) collectAllNames(*k, names);
}

class Uniquifier {
 public:
  explicit Uniquifier(const Term& root) { collectAllNames(root, used_); }

  TermPtr term(const TermPtr& t) {
    auto n = std::make_shared<Term>(*t);
    switch (t->kind) {
      case TermKind::Var:
        n->name = lookup(vars_, t->name);
        return n;
      case TermKind::Lam: {
        n->type = type(t->type);
        std::string fresh = bind(t->name);
        vars_.emplace_back(t->name, fresh);
        n->name = fresh;
        n->kids[0] = term(t->kids[0]);
        vars_.pop_back();
        return n;
      }
      case TermKind::Let: {
        n->kids[0] = term(t->kids[0]);
        std::string fresh = bind(t->name);
        vars_.emplace_back(t->name, fresh);
        n->name = fresh;
        n->kids[1] = term(t->kids[1]);
        vars_.pop_back();
        return n;
      }
      case TermKind::TyLam: {
        std::string fresh = bind(t->name);
        tyvars_.emplace_back(t->name, fresh);
        n->name = fresh;
        n->kids[0] = term(t->kids[0]);
        tyvars_.pop_back();
        return n;
      }
      case TermKind::TyApp:
        n->kids[0] = term(t->kids[0]);
        n->type = type(t->type);
        return n;
      default:
        for (auto& k : n->kids) k = term(k);
        return n;
    }
  }

 private:
  static std::string lookup(const NamePairs& scope, const std::string& name) {
    for (auto it = scope.rbegin(); it != scope.rend(); ++it) {
      if (it->first == name) return it->second;
    }
    return name;
  }

  std::string bind(const std::string& name) {
    if (!bound_.count(name)) {
      bound_.insert(name);
      return name;
    }
    std::string fresh = freshName(name, used_);
    used_.insert(fresh);
    bound_.insert(fresh);
    return fresh;
  }

  TypePtr type(const TypePtr& t) {
    switch (t->kind) {
      case TypeKind::Int:
      case TypeKind::Float:
        return t;
      case TypeKind::Var:
        return makeType(TypeKind::Var, {}, lookup(tyvars_, t->name), t->pos);
      case TypeKind::Forall: {
        std::string fresh = bind(t->name);
        tyvars_.emplace_back(t->name, fresh);
        TypePtr body = type(t->args[0]);
        tyvars_.pop_back();
        return makeType(TypeKind::Forall, {body}, fresh, t->pos);
      }
      default: {
        std::vector<TypePtr> args;
        for (const auto& a : t->args) args.push_back(type(a));
        return makeType(t->kind, std::move(args), t->name, t->pos);
      }
    }
  }

  std::set<std::string> used_;
  std::set<std::string> bound_;
  NamePairs vars_;
  NamePairs tyvars_;
};

}  // namespace

TermPtr uniquifyBinders(const TermPtr& term) {
  Uniquifier u(*term);
  return u.term(term);
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

std::string formatFloat(double x) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  std::string s(buf, ptr);
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

namespace {

void printTypeTo(std::ostream& out, const Type& t, bool labels) {
  switch (t.kind) {
    case TypeKind::Int: out << "int"; return;
    case TypeKind::Float: out << "float"; return;
    case TypeKind::Var: out << t.name; return;
    case TypeKind::Box:
      out << "(box ";
      if (labels && t.pos != kNoLabel) out << "#" << t.pos << " ";
      printTypeTo(out, *t.args[0], labels);
      out << ")";
      return;
    case TypeKind::Tuple:
      out << "(tuple";
      for (const auto& a : t.args) {
        out << " ";
        printTypeTo(out, *a, labels);
      }
      out << ")";
      return;
    case TypeKind::Arrow:
      out << "(-> ";
      printTypeTo(out, *t.args[0], labels);
      out << " ";
      printTypeTo(out, *t.args[1], labels);
      out << ")";
      return;
    case TypeKind::Forall:
      out << "(forall (" << t.name << ") ";
      printTypeTo(out, *t.args[0], labels);
      out << ")";
      return;
  }
}

void printTermTo(std::ostream& out, const Term& t, bool labels) {
  auto open = [&](std::string_view keyword) {
    out << "(" << keyword;
    if (labels && t.label != kNoLabel) out << " #" << t.label;
  };
  auto kids = [&](std::size_t from) {
    for (std::size_t i = from; i < t.kids.size(); ++i) {
      out << " ";
      printTermTo(out, *t.kids[i], labels);
    }
    out << ")";
  };
  auto binder = [&]() {
    out << t.name;
    if (labels && t.binder != kNoLabel) out << " #" << t.binder;
  };
  switch (t.kind) {
    case TermKind::IntLit: out << t.intValue; return;
    case TermKind::FloatLit: out << formatFloat(t.floatValue); return;
    case TermKind::Var: out << t.name; return;
    case TermKind::Lam:
      open("lam");
      out << " (";
      binder();
      out << " : ";
      printTypeTo(out, *t.type, labels);
      out << ")";
      kids(0);
      return;
    case TermKind::App: open("app"); kids(0); return;
    case TermKind::TyLam:
      open("tylam");
      out << " (" << t.name << ")";
      kids(0);
      return;
    case TermKind::TyApp:
      open("tyapp");
      out << " ";
      printTermTo(out, t.kid(0), labels);
      out << " ";
      printTypeTo(out, *t.type, labels);
      out << ")";
      return;
    case TermKind::Box: open("box"); kids(0); return;
    case TermKind::Unbox: open("unbox"); kids(0); return;
    case TermKind::Tuple: open("tuple"); kids(0); return;
    case TermKind::Proj:
      open("proj");
      out << " " << t.index;
      kids(0);
      return;
    case TermKind::Let:
      open("let");
      out << " (";
      binder();
      out << " ";
      printTermTo(out, t.kid(0), labels);
      out << ")";
      out << " ";
      printTermTo(out, t.kid(1), labels);
      out << ")";
      return;
    case TermKind::Prim:
      open("prim");
      out << " " << primOpName(t.op);
      kids(0);
      return;
    case TermKind::Ifz: open("ifz"); kids(0); return;
  }
}

}  // namespace

std::string printType(const Type& type, bool showLabels) {
  std::ostringstream out;
  printTypeTo(out, type, showLabels);
  return out.str();
}

std::string printTerm(const Term& term, bool showLabels) {
  std::ostringstream out;
  printTermTo(out, term, showLabels);
  return out.str();
}

std::string printProgram(const LabeledProgram& program, bool showLabels) {
  return printTerm(*program.root(), showLabels);
}

// ---------------------------------------------------------------------------
// Labeling
// ---------------------------------------------------------------------------

namespace {

LabelKind termLabelKind(TermKind kind) {
  switch (kind) {
    case TermKind::IntLit:
    case TermKind::FloatLit: return LabelKind::Literal;
    case TermKind::Lam: return LabelKind::Lambda;
    case TermKind::TyLam: return LabelKind::TyLambda;
    case TermKind::Box: return LabelKind::BoxOp;
    case TermKind::Unbox: return LabelKind::UnboxOp;
    case TermKind::Tuple: return LabelKind::Tuple;
    default: return LabelKind::Use;
  }
}

class Relabeler {
 public:
  TermPtr term(const Term& t) {
    auto n = std::make_shared<Term>(t);
    n->label = next_++;
    switch (t.kind) {
      case TermKind::Var: {
        n->binder = kNoLabel;
        for (auto it = scope_.rbegin(); it != scope_.rend(); ++it) {
          if (it->first == t.name) {
            n->binder = it->second;
            break;
          }
        }
        return n;
      }
      case TermKind::Lam:
        n->binder = next_++;
        n->type = type(*t.type);
        scope_.emplace_back(t.name, n->binder);
        n->kids[0] = term(t.kid(0));
        scope_.pop_back();
        return n;
      case TermKind::Let:
        n->binder = next_++;
        n->kids[0] = term(t.kid(0));
        scope_.emplace_back(t.name, n->binder);
        n->kids[1] = term(t.kid(1));
        scope_.pop_back();
        return n;
      case TermKind::TyApp:
        n->kids[0] = term(t.kid(0));
        n->type = type(*t.type);
        return n;
      default:
        n->binder = kNoLabel;
        for (auto& k : n->kids) k = term(*k);
        return n;
    }
  }

 private:
  TypePtr type(const Type& t) {
    if (t.kind == TypeKind::Int) return Type::intT();
    if (t.kind == TypeKind::Float) return Type::floatT();
    auto n = std::make_shared<Type>(t);
    if (t.kind == TypeKind::Box) n->pos = next_++;
    for (auto& a : n->args) a = type(*a);
    return n;
  }

  LabelId next_ = 0;
  std::vector<std::pair<std::string, LabelId>> scope_;
};

class Indexer {
 public:
  Indexer(std::vector<LabelInfo>& table, std::vector<bool>& present,
          std::map<LabelId, TypePtr>& annotations)
      : table_(table), present_(present), annotations_(annotations) {}

  void term(const Term& t) {
    record(t.label, termLabelKind(t.kind), &t, nullptr, kNoLabel, {});
    switch (t.kind) {
      case TermKind::Lam: {
        record(t.binder, LabelKind::Binder, &t, nullptr, kNoLabel, {});
        annotations_[t.binder] = t.type;
        std::vector<int> path;
        type(t.type, &t, t.binder, path);
        term(t.kid(0));
        return;
      }
      case TermKind::Let:
        record(t.binder, LabelKind::Binder, &t, nullptr, kNoLabel, {});
        term(t.kid(0));
        term(t.kid(1));
        return;
      case TermKind::TyApp: {
        term(t.kid(0));
        std::vector<int> path;
        type(t.type, &t, t.label, path);
        return;
      }
      default:
        for (const auto& k : t.kids) term(*k);
    }
  }

 private:
  void type(const TypePtr& ty, const Term* owningTerm, LabelId owner,
            std::vector<int>& path) {
    if (ty->kind == TypeKind::Box && ty->pos != kNoLabel) {
      record(ty->pos, LabelKind::TypePos, owningTerm, ty.get(), owner, path);
      annotations_[ty->pos] = ty;
    }
    for (std::size_t i = 0; i < ty->args.size(); ++i) {
      int step = 0;
      if (ty->kind == TypeKind::Tuple) step = static_cast<int>(i) + 1;
      if (ty->kind == TypeKind::Arrow) step = static_cast<int>(i) + 1;
      path.push_back(step);
      type(ty->args[i], owningTerm, owner, path);
      path.pop_back();
    }
  }

  void record(LabelId id, LabelKind kind, const Term* t, const Type* ty,
              LabelId owner, std::vector<int> path) {
    if (id == kNoLabel) return;
    if (id >= table_.size()) {
      table_.resize(id + 1);
      present_.resize(id + 1, false);
    }
    if (present_[id]) {
      throw InternalError("duplicate-label",
                          "label #" + std::to_string(id) + " occurs twice");
    }
    present_[id] = true;
    table_[id] = LabelInfo{kind, t, ty, owner, std::move(path)};
  }

  std::vector<LabelInfo>& table_;
  std::vector<bool>& present_;
  std::map<LabelId, TypePtr>& annotations_;
};

}  // namespace

const LabelInfo& LabeledProgram::info(LabelId id) const {
  if (!hasLabel(id)) {
    throw LabeledError("unknown-label", id, "no such label in program");
  }
  return table_[id];
}

std::vector<LabelId> LabeledProgram::labelsOfKind(LabelKind kind) const {
  std::vector<LabelId> out;
  for (LabelId id = 0; id < table_.size(); ++id) {
    if (present_[id] && table_[id].kind == kind) out.push_back(id);
  }
  return out;
}

LabeledProgram LabeledProgram::index(TermPtr root) {
  LabeledProgram p;
  p.root_ = std::move(root);
  Indexer indexer(p.table_, p.present_, p.annotations_);
  indexer.term(*p.root_);
  return p;
}

LabeledProgram assignLabels(const TermPtr& term) {
  Relabeler relabeler;
  return LabeledProgram::index(relabeler.term(*term));
}

}  // namespace ubx
