#include <CLI11.hpp>

#include <charconv>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ubx/diff.hpp"
#include "ubx/flow.hpp"
#include "ubx/modules.hpp"
#include "ubx/unboxer.hpp"

using namespace ubx;

namespace {

std::string readFile(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("io", "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void writeFile(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("io", "cannot write '" + path + "'");
  out << text;
}

TypedProgram load(const std::string& path) { return typecheckSource(readFile(path)); }

std::string setText(const LabelSet& s) {
  std::string out = "{";
  for (LabelId l : s) out += (out.size() > 1 ? ", #" : "#") + std::to_string(l);
  return out + "}";
}

LabelId parseLabel(const std::string& text) {
  std::string digits = !text.empty() && text[0] == '#' ? text.substr(1) : text;
  LabelId id = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), id);
  if (digits.empty() || ec != std::errc() || ptr != digits.data() + digits.size()) {
    throw Error("usage", "'" + text + "' is not a label (expected #<n>)");
  }
  return id;
}

int cmdCheck(const std::string& file) {
  TypedProgram tp = load(file);
  std::cout << "ok: " << printType(*tp.resultType) << "\n";
  return 0;
}

int cmdRun(const std::string& file, std::uint64_t fuel, bool trace) {
  TypedProgram tp = load(file);
  RunOptions options;
  options.fuel = fuel;
  if (trace) options.onState = [](const MachineState& s) { std::cout << traceLine(s) << "\n"; };
  Outcome out = Machine(tp).run(options);
  switch (out.kind) {
    case Outcome::Kind::Final:
      std::cout << out.observation << "\n";
      return 0;
    case Outcome::Kind::OutOfFuel:
      throw Error("out-of-fuel", out.describe());
    case Outcome::Kind::Stuck:
      throw InternalError("stuck", out.describe());
  }
  return 2;
}

int cmdAnalyze(const std::string& file, bool json) {
  TypedProgram tp = load(file);
  FlowResult fr = analyze(tp);
  if (json) {
    std::cout << flowToJson(fr);
    return 0;
  }
  const LabeledProgram& p = tp.program;
  std::cout << printProgram(p, true) << "\n";
  for (const auto& [l, s] : fr.cache) {
    std::cout << "#" << l << " " << labelKindName(p.kind(l)) << " " << setText(s) << "\n";
  }
  for (const auto& [l, s] : fr.binderFlow) {
    std::cout << "#" << l << " binder " << p.term(l).name << " " << setText(s) << "\n";
  }
  for (const auto& [l, s] : fr.typePosFlow) {
    std::cout << "#" << l << " type position " << setText(s) << "\n";
  }
  return 0;
}

int cmdUnbox(const std::string& file, const std::string& output, const std::string& report,
             const std::vector<std::string>& keep) {
  if (!report.empty() && report != "json" && report != "text") {
    throw Error("usage", "--report expects json or text");
  }
  TypedProgram tp = load(file);
  PinPolicy policy;
  for (const auto& k : keep) {
    LabelId id = parseLabel(k);
    if (!tp.program.hasLabel(id)) throw LabeledError("bad-keep", id, "no such label");
    LabelKind kind = tp.program.kind(id);
    if (kind != LabelKind::BoxOp && kind != LabelKind::UnboxOp && kind != LabelKind::TypePos) {
      throw LabeledError("bad-keep", id, "not a box, unbox or box type position");
    }
    policy.keep.insert(id);
  }
  Optimized opt = optimize(tp, policy);
  std::string program = printProgram(opt.program.program, false) + "\n";
  if (!output.empty()) writeFile(output, program);
  if (report == "json") {
    std::cout << opt.report.toJson();
    return 0;
  }
  if (output.empty()) std::cout << program;
  std::cerr << "removed " << opt.report.boxesRemoved << " of " << opt.report.boxesTotal
            << " boxes\n";
  for (const Pin& pin : opt.report.pins) {
    std::cerr << "pinned #" << pin.label << ": " << pinReasonName(pin.reason) << "\n";
  }
  return 0;
}

int cmdLink(const std::vector<std::string>& files, const std::string& mainFile,
            const std::vector<std::string>& descriptorFiles, bool runIt) {
  std::vector<ModuleUnit> units;
  std::set<std::string> exportedNames;
  for (const auto& f : files) {
    units.push_back(parseModule(readFile(f)));
    for (const auto& [n, t] : units.back().exports) exportedNames.insert(n);
  }
  std::map<std::string, InterfaceDescriptor> descriptors;
  for (const auto& f : descriptorFiles) {
    InterfaceDescriptor d = readDescriptor(readFile(f));
    descriptors[d.moduleName] = d;
  }
  TermPtr main = parseOpen(readFile(mainFile), exportedNames);
  TypedProgram tp = linkUnits(units, main, descriptors);
  if (!runIt) {
    std::cout << printProgram(tp.program, false) << "\n";
    return 0;
  }
  Outcome out = run(tp);
  if (out.kind == Outcome::Kind::Stuck) throw InternalError("stuck", out.describe());
  if (out.kind == Outcome::Kind::OutOfFuel) throw Error("out-of-fuel", out.describe());
  std::cout << out.observation << "\n";
  return 0;
}

int cmdUnboxModule(const std::string& file, const std::string& mode, const std::string& output,
                   const std::string& descriptorOut) {
  ModuleUnit unit = parseModule(readFile(file));
  BoundaryMode m = mode == "pinned" ? BoundaryMode::Pinned : BoundaryMode::Descriptor;
  ModuleOptimization opt = optimizeModule(unit, m);
  std::string text = printModule(opt.unit);
  if (output.empty()) {
    std::cout << text;
  } else {
    writeFile(output, text);
  }
  if (!descriptorOut.empty()) writeFile(descriptorOut, writeDescriptor(opt.descriptor));
  std::cerr << "removed " << opt.report.boxesRemoved << " of " << opt.report.boxesTotal
            << " boxes\n";
  return 0;
}

int cmdDiff(std::size_t trials, std::uint64_t seed, bool fault) {
  DiffOptions options;
  options.trials = trials;
  options.seed = seed;
  options.injectRewriteFault = fault;
  DiffReport report = diffRun(options);
  std::cout << report.summary() << "\n";
  return report.ok() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boxed core language compiler with flow-driven unboxing"};
  app.require_subcommand(1);

  std::string file, output, report, mainFile, mode, descriptorOut;
  std::uint64_t fuel = 100000, seed = 1;
  unsigned depth = 6;
  std::size_t trials = 100;
  bool trace = false, json = false, runIt = false, fault = false;
  std::vector<std::string> keep, files, descriptorFiles;

  auto* check = app.add_subcommand("check", "parse and typecheck a program");
  check->add_option("file", file, "program")->required();

  auto* runCmd = app.add_subcommand("run", "evaluate a program");
  runCmd->add_option("file", file, "program")->required();
  runCmd->add_option("--fuel", fuel, "step limit");
  runCmd->add_flag("--trace", trace, "print one line per machine state");

  auto* analyzeCmd = app.add_subcommand("analyze", "print the flow analysis");
  analyzeCmd->add_option("file", file, "program")->required();
  analyzeCmd->add_flag("--json", json, "JSON output");

  auto* unbox = app.add_subcommand("unbox", "optimize a program");
  unbox->add_option("file", file, "program")->required();
  unbox->add_option("-o", output, "write the optimized program here");
  unbox->add_option("--report", report, "report format (json or text)");
  unbox->add_option("--keep", keep, "label to keep, e.g. #4");

  auto* link = app.add_subcommand("link", "link module units with a main term");
  link->add_option("units", files, "module files in link order")->required();
  link->add_option("--main", mainFile, "main term")->required();
  link->add_option("--descriptor", descriptorFiles, "interface descriptor (.ubxi)");
  link->add_flag("--run", runIt, "run the linked program instead of printing it");

  auto* unboxModule = app.add_subcommand("unbox-module", "optimize one module unit");
  unboxModule->add_option("file", file, "module")->required();
  unboxModule->add_option("--mode", mode, "boundary policy")
      ->required()
      ->check(CLI::IsMember({"pinned", "descriptor"}));
  unboxModule->add_option("-o", output, "write the optimized module here");
  unboxModule->add_option("--descriptor-out", descriptorOut, "write the descriptor here");

  auto* gen = app.add_subcommand("gen", "generate a random program");
  gen->add_option("--seed", seed, "generator seed");
  gen->add_option("--depth", depth, "maximum depth")->check(CLI::PositiveNumber);

  auto* diff = app.add_subcommand("diff", "differential test of the optimizer");
  diff->add_option("--trials", trials, "number of programs");
  diff->add_option("--seed", seed, "first seed");
  diff->add_flag("--inject-fault", fault, "deliberately break the rewrite");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*check) return cmdCheck(file);
    if (*runCmd) return cmdRun(file, fuel, trace);
    if (*analyzeCmd) return cmdAnalyze(file, json);
    if (*unbox) return cmdUnbox(file, output, report, keep);
    if (*link) return cmdLink(files, mainFile, descriptorFiles, runIt);
    if (*unboxModule) return cmdUnboxModule(file, mode, output, descriptorOut);
    if (*gen) {
      GenConfig cfg;
      cfg.seed = seed;
      cfg.maxDepth = depth;
      std::cout << printTerm(*generateTerm(cfg)) << "\n";
      return 0;
    }
    if (*diff) return cmdDiff(trials, seed, fault);
  } catch (const InternalError& e) {
    std::cerr << e.render() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << e.render() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error[internal]: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
