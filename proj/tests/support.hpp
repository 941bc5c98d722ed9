#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ubx/modules.hpp"
#include "ubx/typing.hpp"

namespace ubxtest {

inline std::string corpusDir() { return UBX_CORPUS_DIR; }

inline std::string readFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Value of a `; key: value` header line, if present.
inline std::optional<std::string> header(const std::string& source, const std::string& key) {
  std::istringstream in(source);
  std::string line;
  const std::string prefix = "; " + key + ": ";
  while (std::getline(in, line)) {
    if (line.rfind(prefix, 0) == 0) return line.substr(prefix.size());
  }
  return std::nullopt;
}

struct CorpusProgram {
  std::string name;  // e.g. mono/param
  std::string source;
  std::string expect;
  std::optional<std::size_t> retainedBoxes;
};

inline std::vector<CorpusProgram> corpus(const std::string& subdir) {
  std::vector<std::filesystem::path> paths;
  for (const auto& e : std::filesystem::directory_iterator(corpusDir() + "/" + subdir)) {
    if (e.path().extension() == ".ubx") paths.push_back(e.path());
  }
  std::sort(paths.begin(), paths.end());
  std::vector<CorpusProgram> out;
  for (const auto& p : paths) {
    CorpusProgram c;
    c.name = subdir + "/" + p.stem().string();
    c.source = readFile(p);
    c.expect = header(c.source, "expect").value_or("");
    if (auto r = header(c.source, "retained-boxes")) c.retainedBoxes = std::stoul(*r);
    out.push_back(std::move(c));
  }
  return out;
}

/// Every standalone program in the corpus.
inline std::vector<CorpusProgram> allPrograms() {
  std::vector<CorpusProgram> out;
  for (const char* dir : {"mono", "poly", "misc", "."}) {
    auto part = corpus(dir);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

inline ubx::ModuleUnit loadModule(const std::string& name) {
  return ubx::parseModule(readFile(corpusDir() + "/modules/" + name + ".ubxm"));
}

/// Modules without imports, usable on their own in the harness.
inline std::vector<std::string> standaloneModules() {
  return {"counter", "floaty", "internal", "one", "pairs", "poly"};
}

}  // namespace ubxtest
