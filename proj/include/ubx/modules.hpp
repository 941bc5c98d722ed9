#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ubx/typing.hpp"
#include "ubx/unboxer.hpp"

namespace ubx {

struct ModuleUnit {
  std::string name;
  std::vector<std::pair<std::string, TypePtr>> imports;
  std::vector<std::pair<std::string, TermPtr>> definitions;
  std::vector<std::pair<std::string, TypePtr>> exports;

  const TypePtr* exportType(const std::string& name) const;
};

class DuplicateName : public ParseError {
 public:
  DuplicateName(int line, int column, const std::string& name)
      : ParseError(line, column, {}, "name '" + name + "' is already bound in this module",
                   "duplicate-name") {}
};

class UndefinedExport : public ParseError {
 public:
  UndefinedExport(int line, int column, const std::string& name)
      : ParseError(line, column, {}, "export '" + name + "' has no definition",
                   "undefined-export") {}
};

class LinkError : public Error {
 public:
  LinkError(std::string name, TypePtr expected, TypePtr found);
  const std::string& name() const { return name_; }
  const TypePtr& expected() const { return expected_; }
  const TypePtr& found() const { return found_; }

 private:
  std::string name_;
  TypePtr expected_;
  TypePtr found_;
};

class MissingImport : public Error {
 public:
  MissingImport(const std::string& unit, const std::string& name)
      : Error("missing-import", "unit '" + unit + "' imports '" + name +
                                    "', which no earlier unit exports") {}
};

/// `(module <name> (import (x T))* (def (x e))* (export (x T))*)`
ModuleUnit parseModule(std::string_view text);
std::string printModule(const ModuleUnit& unit);

/// One decision per Box constructor of every boundary type, keyed by the
/// name and the path of the constructor (box content 0, tuple field i,
/// arrow domain 1 / codomain 2, forall body 0).
struct BoundaryDecision {
  std::string name;
  std::vector<int> path;
  bool removed = false;
  bool operator==(const BoundaryDecision&) const = default;
};

struct InterfaceDescriptor {
  std::string moduleName;
  std::vector<BoundaryDecision> decisions;  // sorted by (name, path)
  std::map<std::string, TypePtr> rewrittenTypes;

  /// Applies this descriptor's decisions for `name` to `type`.
  TypePtr apply(const std::string& name, const TypePtr& type) const;
  bool operator==(const InterfaceDescriptor& other) const;
};

/// Sorted-key JSON: `{"decisions": [...], "module": ..., "types": {...}}`.
std::string writeDescriptor(const InterfaceDescriptor& d);
InterfaceDescriptor readDescriptor(std::string_view text);

/// A single closed program of type int that typechecks the unit against its
/// import types: imports become annotated parameters, definitions nested
/// lets, and exports annotated bindings.
TermPtr moduleProgram(const ModuleUnit& unit);
TypedProgram typecheckModule(const ModuleUnit& unit);

/// Links units in order and closes them with `main`, whose free variables
/// name exports of the units. Imports resolve to the most recent earlier
/// export of that name. When the exporter has a descriptor, the importer's
/// type is checked against the rewritten type and the import is coerced
/// back to the importer's type.
TypedProgram linkUnits(const std::vector<ModuleUnit>& units, const TermPtr& main,
                       const std::map<std::string, InterfaceDescriptor>& descriptors = {});
TermPtr linkTerm(const std::vector<ModuleUnit>& units, const TermPtr& main,
                 const std::map<std::string, InterfaceDescriptor>& descriptors = {});

enum class BoundaryMode : std::uint8_t { Pinned, Descriptor };

struct ModuleOptimization {
  ModuleUnit unit;
  InterfaceDescriptor descriptor;
  OptimizationReport report;
};

ModuleOptimization optimizeModule(const ModuleUnit& unit, BoundaryMode mode);

/// Whether the Box constructor at a path was removed.
using RemovedAt = std::function<bool(const std::vector<int>&)>;
RemovedAt removedIn(const InterfaceDescriptor& d, const std::string& name);

/// Coercions between a boundary type and its rewritten form. `coerceUp`
/// turns a value of the rewritten type into one of `original` by rebuilding
/// the removed boxes; `coerceDown` goes the other way.
TermPtr coerceUp(const TypePtr& original, const RemovedAt& removed, const TermPtr& value);
TermPtr coerceDown(const TypePtr& original, const RemovedAt& removed, const TermPtr& value);

class GenerationExhausted : public Error {
 public:
  explicit GenerationExhausted(const std::string& message)
      : Error("generation-exhausted", message) {}
};

struct HarnessVerdict {
  bool pass = true;
  std::size_t trials = 0;
  std::optional<std::size_t> firstFailure;  // trial index
  std::uint64_t failureSeed = 0;
  std::string detail;
};

/// Generates `trials` random int-valued clients of `original`, links each
/// after `providers` against the original and the optimized unit (adapting
/// through `descriptor` when it is given) and compares outcomes.
HarnessVerdict contextualHarness(const ModuleUnit& original, const ModuleUnit& optimized,
                                 const std::optional<InterfaceDescriptor>& descriptor,
                                 std::size_t trials, std::uint64_t seed,
                                 const std::vector<ModuleUnit>& providers = {});

}  // namespace ubx
