#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "ubx/error.hpp"

namespace ubx {

enum class LabelKind : std::uint8_t {
  BoxOp,
  UnboxOp,
  Lambda,
  TyLambda,
  Tuple,
  Literal,
  TypePos,
  Binder,
  Use,
};

std::string_view labelKindName(LabelKind kind);

// ---------------------------------------------------------------------------
// Types
// ---------------------------------------------------------------------------

enum class TypeKind : std::uint8_t { Int, Float, Box, Tuple, Arrow, Forall, Var };

struct Type;
using TypePtr = std::shared_ptr<const Type>;

/// Immutable source type. Box nodes carry a position label once the
/// enclosing program has been labeled; synthesized box types produced by the
/// checker reuse the label of the box operation that created them.
struct Type {
  TypeKind kind = TypeKind::Int;
  std::string name;            // Forall binder or Var name
  std::vector<TypePtr> args;   // Box: 1, Tuple: n, Arrow: 2, Forall: 1
  LabelId pos = kNoLabel;      // Box only

  static TypePtr intT();
  static TypePtr floatT();
  static TypePtr box(TypePtr content, LabelId pos = kNoLabel);
  static TypePtr tuple(std::vector<TypePtr> fields);
  static TypePtr arrow(TypePtr from, TypePtr to);
  static TypePtr forall(std::string var, TypePtr body);
  static TypePtr var(std::string name);

  const Type& content() const { return *args[0]; }
};

/// Structural equality up to renaming of Forall binders; labels ignored.
bool typeEqual(const Type& a, const Type& b);
/// Capture-avoiding substitution of `replacement` for free `var`.
TypePtr substitute(const TypePtr& type, const std::string& var,
                   const TypePtr& replacement);
std::set<std::string> freeTypeVars(const Type& type);
/// Strips every position label (used when types cross program boundaries).
TypePtr stripTypeLabels(const TypePtr& type);

// ---------------------------------------------------------------------------
// Terms
// ---------------------------------------------------------------------------

enum class TermKind : std::uint8_t {
  IntLit,
  FloatLit,
  Var,
  Lam,
  App,
  TyLam,
  TyApp,
  Box,
  Unbox,
  Tuple,
  Proj,
  Let,
  Prim,
  Ifz,
};

enum class PrimOp : std::uint8_t { Add, Sub, Mul, FAdd, FMul };

std::string_view primOpName(PrimOp op);
bool isFloatOp(PrimOp op);

struct Term;
using TermPtr = std::shared_ptr<const Term>;

/// Immutable term node. Children layout per kind:
///   Lam: {body}            App: {fn, arg}        TyLam: {body}
///   TyApp: {fn}            Box/Unbox/Proj: {e}   Tuple: fields
///   Let: {bound, body}     Prim: {lhs, rhs}      Ifz: {cond, then, else}
struct Term {
  TermKind kind = TermKind::IntLit;
  LabelId label = kNoLabel;
  // Lam/Let: label of the introduced binder. Var: label of the referenced
  // binder (filled by assignLabels).
  LabelId binder = kNoLabel;
  std::int64_t intValue = 0;
  double floatValue = 0.0;
  std::string name;  // Var, Lam/Let binder, TyLam type variable
  TypePtr type;      // Lam parameter annotation, TyApp argument
  PrimOp op = PrimOp::Add;
  std::uint32_t index = 0;  // Proj, 1-based
  std::vector<TermPtr> kids;

  const Term& kid(std::size_t i) const { return *kids[i]; }

  static TermPtr intLit(std::int64_t value);
  static TermPtr floatLit(double value);
  static TermPtr var(std::string name);
  static TermPtr lam(std::string param, TypePtr annotation, TermPtr body);
  static TermPtr app(TermPtr fn, TermPtr arg);
  static TermPtr tyLam(std::string tyvar, TermPtr body);
  static TermPtr tyApp(TermPtr fn, TypePtr arg);
  static TermPtr box(TermPtr e);
  static TermPtr unbox(TermPtr e);
  static TermPtr tuple(std::vector<TermPtr> fields);
  static TermPtr proj(std::uint32_t index, TermPtr e);
  static TermPtr let(std::string name, TermPtr bound, TermPtr body);
  static TermPtr prim(PrimOp op, TermPtr lhs, TermPtr rhs);
  static TermPtr ifz(TermPtr cond, TermPtr then, TermPtr otherwise);
};

/// Alpha-equivalence on terms and embedded types; labels ignored.
bool alphaEqual(const Term& a, const Term& b);
std::set<std::string> freeVars(const Term& term);
/// Number of term nodes (not counting types).
std::size_t termSize(const Term& term);

// ---------------------------------------------------------------------------
// Parsing and printing
// ---------------------------------------------------------------------------

/// Parses one closed top-level term. Binders are alpha-renamed so that every
/// binder name in the result is unique.
TermPtr parse(std::string_view text);
/// Like parse, but the listed names may occur free.
TermPtr parseOpen(std::string_view text, const std::set<std::string>& freeNames);
TypePtr parseType(std::string_view text);

/// Renames binders (term and type level) so that no name is bound twice.
/// Free variables are left alone and never captured.
TermPtr uniquifyBinders(const TermPtr& term);

std::string printType(const Type& type, bool showLabels = false);
/// Shortest round-tripping decimal form, always with a '.' or exponent.
std::string formatFloat(double x);
std::string printTerm(const Term& term, bool showLabels = false);

// Shared s-expression reader, also used by the module grammar.
struct SExpr {
  enum class Kind { Atom, List } kind = Kind::Atom;
  std::string atom;
  std::vector<SExpr> items;
  int line = 1;
  int column = 1;
  int endLine = 1;    // position of the closing paren for lists
  int endColumn = 1;
};
/// Reads exactly one datum; trailing tokens are a ParseError.
SExpr readSExpr(std::string_view text);

class SyntaxReader {
 public:
  explicit SyntaxReader(std::set<std::string> freeNames = {})
      : freeNames_(std::move(freeNames)) {}
  TermPtr term(const SExpr& e);
  TypePtr type(const SExpr& e);
  void bindTypeVar(const std::string& name) { tyScope_.push_back(name); }

 private:
  std::set<std::string> freeNames_;
  std::vector<std::string> scope_;
  std::vector<std::string> tyScope_;
};

bool isKeyword(std::string_view word);
bool isIdentifier(std::string_view word);

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------

struct LabelInfo {
  LabelKind kind = LabelKind::Use;
  const Term* term = nullptr;  // owning term (Binder: its Lam/Let)
  const Type* type = nullptr;  // TypePos: the Box node
  LabelId owner = kNoLabel;    // TypePos: binder or TyApp label
  std::vector<int> path;       // TypePos: path from annotation root
};

/// A term whose nodes, binders and box-type positions all carry labels, plus
/// an index from label id to location.
class LabeledProgram {
 public:
  LabeledProgram() = default;

  const TermPtr& root() const { return root_; }
  std::size_t labelCount() const { return table_.size(); }
  bool hasLabel(LabelId id) const {
    return id < table_.size() && present_[id];
  }
  const LabelInfo& info(LabelId id) const;
  LabelKind kind(LabelId id) const { return info(id).kind; }
  const Term& term(LabelId id) const { return *info(id).term; }
  std::vector<LabelId> labelsOfKind(LabelKind kind) const;

  /// Binder/TypePos label to annotated type: Lam binders map to their
  /// parameter annotation, TypePos labels to the Box type they label.
  const std::map<LabelId, TypePtr>& typeAnnotations() const {
    return annotations_;
  }

  /// Builds the table from labels already present on `root`.
  static LabeledProgram index(TermPtr root);

 private:
  friend LabeledProgram assignLabels(const TermPtr& term);
  TermPtr root_;
  std::vector<LabelInfo> table_;
  std::vector<bool> present_;
  std::map<LabelId, TypePtr> annotations_;
};

/// Numbers every node in deterministic preorder. Existing labels are
/// discarded, so relabeling is idempotent.
LabeledProgram assignLabels(const TermPtr& term);

std::string printProgram(const LabeledProgram& program, bool showLabels);

}  // namespace ubx
