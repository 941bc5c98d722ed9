#include "ubx/generator.hpp"

#include <random>

namespace ubx {

namespace {

struct GenFail {};

bool containsBox(const Term& t) {
  if (t.kind == TermKind::Box) return true;
  for (const auto& k : t.kids) {
    if (containsBox(*k)) return true;
  }
  return false;
}

bool usesAny(const Term& t, const TypeEnv& env) {
  auto free = freeVars(t);
  for (const auto& [n, ty] : env) {
    if (free.count(n)) return true;
  }
  return false;
}

class Generator {
 public:
  Generator(const GenConfig& cfg, std::uint64_t stream)
      : cfg_(cfg), rng_(cfg.seed * 0x9e3779b97f4a7c15ULL + stream) {}

  TermPtr term(const TypePtr& goal, unsigned depth) {
    if (++budget_ > 4000) throw GenFail{};
    if (depth <= 1) return leaf(goal);

    enum Strategy { Intro, Let, BetaBox, LetFun, Elim, Ifz, PolyId, LetPoly, TupleProj };
    std::vector<double> w(9, 0.0);
    w[Intro] = 2.0;
    w[Let] = 1.2;
    w[BetaBox] = 1.5 * cfg_.boxWeight;
    w[LetFun] = 1.0;
    w[Elim] = eliminable(goal) ? 2.5 : 0.0;
    w[Ifz] = 0.4;
    w[PolyId] = cfg_.boxWeight > 0 ? 0.8 * cfg_.polyWeight : 0.0;
    w[LetPoly] = 0.6 * cfg_.polyWeight;
    w[TupleProj] = 0.5 * cfg_.tupleWeight;
    if (goal->kind == TypeKind::Var) w[Intro] = w[Let] = w[BetaBox] = w[LetFun] = w[Ifz] = 0.0;

    switch (pick(w)) {
      case Intro:
        return intro(goal, depth);
      case Let: {
        TypePtr t = randomType(2);
        std::string x = fresh("v");
        TermPtr bound = term(t, depth - 1);
        return Term::let(x, bound, scoped(x, t, goal, depth - 1));
      }
      case BetaBox: {
        TypePtr inner = randomType(1);
        TypePtr param = Type::box(inner);
        std::string x = fresh("v");
        TermPtr body = scoped(x, param, goal, depth - 1);
        return Term::app(Term::lam(x, param, body), Term::box(term(inner, depth - 1)));
      }
      case LetFun: {
        bool boxed = cfg_.boxWeight > 0;
        TypePtr from = chance(boxed ? 0.6 * cfg_.boxWeight / (1.0 + cfg_.boxWeight) + 0.2 : 0.0)
                           ? Type::box(randomType(1))
                           : randomType(2);
        TypePtr to = chance(0.5) ? goal : randomType(1);
        TypePtr fnType = Type::arrow(from, to);
        std::string f = fresh("f");
        std::string x = fresh("v");
        TermPtr fn = Term::lam(x, from, scoped(x, from, to, depth - 1));
        return Term::let(f, fn, scoped(f, fnType, goal, depth - 1));
      }
      case Elim:
        return eliminate(goal, depth);
      case Ifz:
        return Term::ifz(term(Type::intT(), depth - 1), term(goal, depth - 1),
                         term(goal, depth - 1));
      case PolyId: {
        TypePtr inst = Type::box(goal);
        return Term::unbox(Term::app(Term::tyApp(identity(), inst),
                                     Term::box(term(goal, depth - 1))));
      }
      case LetPoly: {
        auto [fn, type] = polymorphic();
        std::string f = fresh("p");
        return Term::let(f, fn, scoped(f, type, goal, depth - 1));
      }
      case TupleProj: {
        TypePtr other = randomType(1);
        bool first = chance(0.5);
        std::vector<TermPtr> fields;
        fields.push_back(first ? term(goal, depth - 1) : term(other, depth - 1));
        fields.push_back(first ? term(other, depth - 1) : term(goal, depth - 1));
        return Term::proj(first ? 1 : 2, Term::tuple(std::move(fields)));
      }
    }
    return intro(goal, depth);
  }

  // A term that eliminates one of the environment variables toward `goal`.
  std::optional<TermPtr> useEnvironment(const TypePtr& goal, unsigned depth) {
    std::vector<std::size_t> usable;
    for (std::size_t i = 0; i < env_.size(); ++i) {
      if (reaches(*env_[i].second, *goal, 4)) usable.push_back(i);
    }
    if (usable.empty()) return std::nullopt;
    std::size_t i = usable[index(usable.size())];
    return elimFrom(Term::var(env_[i].first), env_[i].second, goal, depth);
  }

  void bind(const std::string& name, TypePtr type) { env_.emplace_back(name, std::move(type)); }

  bool chance(double p) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p; }

 private:
  TermPtr scoped(const std::string& x, const TypePtr& t, const TypePtr& goal, unsigned depth) {
    env_.emplace_back(x, t);
    TermPtr body;
    try {
      body = term(goal, depth);
    } catch (...) {
      env_.pop_back();
      throw;
    }
    env_.pop_back();
    return body;
  }

  TermPtr intro(const TypePtr& goal, unsigned depth) {
    switch (goal->kind) {
      case TypeKind::Int:
        if (chance(0.5)) return literal();
        return Term::prim(chance(0.5) ? PrimOp::Add : (chance(0.5) ? PrimOp::Sub : PrimOp::Mul),
                          term(goal, depth - 1), term(goal, depth - 1));
      case TypeKind::Float:
        if (chance(0.6)) return floatLiteral();
        return Term::prim(chance(0.5) ? PrimOp::FAdd : PrimOp::FMul, term(goal, depth - 1),
                          term(goal, depth - 1));
      case TypeKind::Box:
        return Term::box(term(goal->args[0], depth - 1));
      case TypeKind::Tuple: {
        std::vector<TermPtr> fields;
        for (const auto& a : goal->args) fields.push_back(term(a, depth - 1));
        return Term::tuple(std::move(fields));
      }
      case TypeKind::Arrow: {
        std::string x = fresh("v");
        return Term::lam(x, goal->args[0], scoped(x, goal->args[0], goal->args[1], depth - 1));
      }
      case TypeKind::Forall:
        return Term::tyLam(goal->name, term(goal->args[0], depth - 1));
      case TypeKind::Var:
        return eliminate(goal, depth);
    }
    throw GenFail{};
  }

  TermPtr leaf(const TypePtr& goal) {
    std::vector<std::size_t> exact;
    for (std::size_t i = 0; i < env_.size(); ++i) {
      if (typeEqual(*env_[i].second, *goal)) exact.push_back(i);
    }
    if (!exact.empty() && (goal->kind == TypeKind::Var || chance(0.4))) {
      return Term::var(env_[exact[index(exact.size())]].first);
    }
    switch (goal->kind) {
      case TypeKind::Int: return literal();
      case TypeKind::Float: return floatLiteral();
      case TypeKind::Box: return Term::box(leaf(goal->args[0]));
      case TypeKind::Tuple: {
        std::vector<TermPtr> fields;
        for (const auto& a : goal->args) fields.push_back(leaf(a));
        return Term::tuple(std::move(fields));
      }
      case TypeKind::Arrow: {
        std::string x = fresh("v");
        env_.emplace_back(x, goal->args[0]);
        TermPtr body;
        try {
          body = leaf(goal->args[1]);
        } catch (...) {
          env_.pop_back();
          throw;
        }
        env_.pop_back();
        return Term::lam(x, goal->args[0], body);
      }
      case TypeKind::Forall:
        return Term::tyLam(goal->name, leaf(goal->args[0]));
      case TypeKind::Var:
        throw GenFail{};
    }
    throw GenFail{};
  }

  bool eliminable(const TypePtr& goal) const {
    for (const auto& [n, t] : env_) {
      if (reaches(*t, *goal, 4)) return true;
    }
    return false;
  }

  TermPtr eliminate(const TypePtr& goal, unsigned depth) {
    auto t = useEnvironment(goal, depth);
    if (!t) throw GenFail{};
    return *t;
  }

  // Candidate instantiations for a forall when heading toward `goal`.
  std::vector<TypePtr> instantiations(const Type& goal) const {
    std::vector<TypePtr> out;
    auto g = std::make_shared<Type>(goal);
    if (traceability(goal) == Traceability::Ref) out.push_back(g);
    if (cfg_.boxWeight > 0) {
      out.push_back(Type::box(g));
      out.push_back(Type::box(Type::intT()));
    } else {
      out.push_back(Type::tuple({g, Type::intT()}));
    }
    return out;
  }

  bool reaches(const Type& t, const Type& goal, int fuel) const {
    if (typeEqual(t, goal)) return true;
    if (fuel == 0) return false;
    switch (t.kind) {
      case TypeKind::Box: return reaches(*t.args[0], goal, fuel - 1);
      case TypeKind::Tuple:
        for (const auto& a : t.args) {
          if (reaches(*a, goal, fuel - 1)) return true;
        }
        return false;
      case TypeKind::Arrow:
        return generable(*t.args[0]) && reaches(*t.args[1], goal, fuel - 1);
      case TypeKind::Forall:
        for (const auto& inst : instantiations(goal)) {
          auto body = substitute(t.args[0], t.name, inst);
          if (reaches(*body, goal, fuel - 1)) return true;
        }
        return false;
      default:
        return false;
    }
  }

  bool generable(const Type& t) const {
    for (const auto& v : freeTypeVars(t)) {
      bool found = false;
      for (const auto& [n, ty] : env_) found = found || typeEqual(*ty, *Type::var(v));
      if (!found) return false;
    }
    return true;
  }

  TermPtr elimFrom(TermPtr v, const TypePtr& t, const TypePtr& goal, unsigned depth) {
    if (typeEqual(*t, *goal)) return v;
    unsigned sub = depth > 1 ? depth - 1 : 1;
    switch (t->kind) {
      case TypeKind::Box:
        return elimFrom(Term::unbox(v), t->args[0], goal, depth);
      case TypeKind::Tuple: {
        std::vector<std::size_t> ok;
        for (std::size_t i = 0; i < t->args.size(); ++i) {
          if (reaches(*t->args[i], *goal, 4)) ok.push_back(i);
        }
        std::size_t i = ok[index(ok.size())];
        return elimFrom(Term::proj(static_cast<std::uint32_t>(i) + 1, v), t->args[i], goal, depth);
      }
      case TypeKind::Arrow:
        return elimFrom(Term::app(v, term(t->args[0], sub)), t->args[1], goal, depth);
      case TypeKind::Forall: {
        std::vector<TypePtr> ok;
        for (const auto& inst : instantiations(*goal)) {
          if (reaches(*substitute(t->args[0], t->name, inst), *goal, 4)) ok.push_back(inst);
        }
        TypePtr inst = ok[index(ok.size())];
        return elimFrom(Term::tyApp(v, inst), substitute(t->args[0], t->name, inst), goal, depth);
      }
      default:
        throw GenFail{};
    }
  }

  TypePtr randomType(int size) {
    std::vector<double> w = {4.0, 0.4, 2.0 * cfg_.boxWeight, size > 0 ? 0.8 * cfg_.tupleWeight : 0.0,
                             size > 0 ? 0.6 : 0.0};
    switch (pick(w)) {
      case 0: return Type::intT();
      case 1: return Type::floatT();
      case 2: return Type::box(randomType(size - 1));
      case 3: {
        std::vector<TypePtr> fields;
        std::size_t n = 2 + index(2);
        for (std::size_t i = 0; i < n; ++i) fields.push_back(randomType(size - 1));
        return Type::tuple(std::move(fields));
      }
      default: {
        TypePtr from = chance(cfg_.boxWeight > 0 ? 0.6 : 0.0) ? Type::box(randomType(size - 1))
                                                              : randomType(size - 1);
        return Type::arrow(from, randomType(size - 1));
      }
    }
  }

  TermPtr identity() {
    std::string a = fresh("a");
    std::string x = fresh("v");
    return Term::tyLam(a, Term::lam(x, Type::var(a), Term::var(x)));
  }

  // A small polymorphic combinator and its type.
  std::pair<TermPtr, TypePtr> polymorphic() {
    std::string a = fresh("a");
    std::string x = fresh("v");
    TypePtr va = Type::var(a);
    switch (index(3)) {
      case 0:
        return {Term::tyLam(a, Term::lam(x, va, Term::var(x))),
                Type::forall(a, Type::arrow(va, va))};
      case 1:
        return {Term::tyLam(a, Term::lam(x, va, Term::tuple({Term::var(x), Term::var(x)}))),
                Type::forall(a, Type::arrow(va, Type::tuple({va, va})))};
      default: {
        std::string y = fresh("v");
        return {Term::tyLam(a, Term::lam(x, va, Term::lam(y, Type::intT(), Term::var(x)))),
                Type::forall(a, Type::arrow(va, Type::arrow(Type::intT(), va)))};
      }
    }
  }

  TermPtr literal() { return Term::intLit(std::uniform_int_distribution<int>(-5, 20)(rng_)); }
  TermPtr floatLiteral() {
    return Term::floatLit(std::uniform_int_distribution<int>(-8, 40)(rng_) / 4.0);
  }

  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng_);
  }

  std::size_t pick(const std::vector<double>& weights) {
    double total = 0;
    for (double x : weights) total += x;
    double r = std::uniform_real_distribution<double>(0.0, total)(rng_);
    for (std::size_t i = 0; i < weights.size(); ++i) {
      if (weights[i] <= 0) continue;
      if (r < weights[i]) return i;
      r -= weights[i];
    }
    for (std::size_t i = weights.size(); i-- > 0;) {
      if (weights[i] > 0) return i;
    }
    return 0;
  }

  std::string fresh(const std::string& base) { return base + std::to_string(counter_++); }

  GenConfig cfg_;
  std::mt19937_64 rng_;
  TypeEnv env_;
  int counter_ = 0;
  int budget_ = 0;
};

constexpr int kAttempts = 32;

}  // namespace

TermPtr generateTerm(const GenConfig& cfg) {
  unsigned depth = std::max(1u, cfg.maxDepth);
  bool wantBox = cfg.boxWeight > 0 && depth > 1;
  TermPtr last;
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Generator g(cfg, static_cast<std::uint64_t>(attempt));
    try {
      last = g.term(Type::intT(), depth);
    } catch (const GenFail&) {
      continue;
    }
    if (!wantBox || containsBox(*last)) return last;
  }
  if (!last) last = Term::intLit(0);
  return wantBox ? Term::unbox(Term::box(last)) : last;
}

TypedProgram generate(const GenConfig& cfg) {
  return typecheck(assignLabels(generateTerm(cfg)));
}

std::optional<TermPtr> generateOpen(const GenConfig& cfg, const TypeEnv& env) {
  if (env.empty()) return std::nullopt;
  unsigned depth = std::max(2u, cfg.maxDepth);
  for (int attempt = 0; attempt < kAttempts; ++attempt) {
    Generator g(cfg, static_cast<std::uint64_t>(attempt));
    for (const auto& [n, t] : env) g.bind(n, t);
    try {
      TermPtr t;
      if (auto use = g.useEnvironment(Type::intT(), depth - 1)) {
        t = *use;
        if (g.chance(0.5)) {
          t = Term::prim(g.chance(0.5) ? PrimOp::Add : PrimOp::Mul, t,
                         g.term(Type::intT(), depth - 1));
        }
      } else {
        t = g.term(Type::intT(), depth);
      }
      if (usesAny(*t, env)) return t;
    } catch (const GenFail&) {
      continue;
    }
  }
  return std::nullopt;
}

}  // namespace ubx
