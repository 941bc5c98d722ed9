#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "ubx/syntax.hpp"

namespace ubx {

enum class Traceability : std::uint8_t { Bits, Ref };

std::string_view traceabilityName(Traceability t);

/// GC tag of a slot holding a value of type `t`. Type variables are ref
/// because polymorphic code only ever sees uniformly represented values.
Traceability traceability(const Type& t);

class TypeError : public LabeledError {
 public:
  TypeError(LabelId label, std::string expected, std::string found);
  const std::string& expected() const { return expected_; }
  const std::string& found() const { return found_; }

 private:
  std::string expected_;
  std::string found_;
};

class InstantiationAtBitsType : public LabeledError {
 public:
  InstantiationAtBitsType(LabelId label, TypePtr type);
  const TypePtr& type() const { return type_; }

 private:
  TypePtr type_;
};

struct TypedProgram {
  LabeledProgram program;
  /// Indexed by label id; set for every term and binder label.
  std::vector<TypePtr> typeOf;
  TypePtr resultType;
  /// Pairs of box-carrying labels (BoxOp, UnboxOp, TypePos) that the typing
  /// derivation forces to agree: box constructors matched by a type
  /// equation, and each unbox with the box constructor of its operand type.
  std::vector<std::pair<LabelId, LabelId>> typeLinks;

  const Type& typeAt(LabelId id) const;
};

/// Checks a closed labeled program.
TypedProgram typecheck(const LabeledProgram& program);

/// Convenience: parse, label and check.
TypedProgram typecheckSource(std::string_view text);

struct MetadataTable {
  std::map<LabelId, Traceability> binders;
  std::map<LabelId, Traceability> boxContents;  // keyed by BoxOp label
  std::map<LabelId, std::vector<Traceability>> tupleFields;  // by Tuple label
  /// Tag of the value each term produces, used for frame slots.
  std::vector<Traceability> values;

  Traceability valueTag(LabelId term) const { return values.at(term); }
};

MetadataTable metadataOf(const TypedProgram& program);

}  // namespace ubx
