#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ubx/typing.hpp"

namespace ubx {

struct GenConfig {
  std::uint64_t seed = 0;
  unsigned maxDepth = 6;
  double polyWeight = 1.0;
  double boxWeight = 1.0;
  double tupleWeight = 1.0;
};

using TypeEnv = std::vector<std::pair<std::string, TypePtr>>;

/// Closed term of type int. Contains a box whenever boxWeight > 0 and
/// maxDepth > 1. Identical configs give identical terms.
TermPtr generateTerm(const GenConfig& cfg);
TypedProgram generate(const GenConfig& cfg);

/// Term of type int over the free variables in `env` that uses at least one
/// of them, or nothing if no attempt within the retry budget manages to.
std::optional<TermPtr> generateOpen(const GenConfig& cfg, const TypeEnv& env);

}  // namespace ubx
