#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "support.hpp"

namespace {

struct Result {
  int exit = -1;
  std::string out;
};

// Runs the CLI with stderr discarded unless `keepErr`.
Result cli(const std::string& args, bool keepErr = false) {
  std::string cmd = std::string("'") + UBX_BINARY + "' " + args + (keepErr ? " 2>&1" : " 2>/dev/null");
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
  int status = pclose(pipe);
  r.exit = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string corpusPath(const std::string& rel) { return "'" + ubxtest::corpusDir() + "/" + rel + "'"; }

std::string trimmed(std::string s) {
  while (!s.empty() && (s.back() == '\n' || s.back() == ' ')) s.pop_back();
  return s;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "ubx-cli-test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(Cli, RunIdentityExample) {
  Result r = cli("run " + corpusPath("id.ubx"));
  EXPECT_EQ(r.exit, 0);
  EXPECT_EQ(r.out, "7\n");
}

TEST(Cli, UnboxMonomorphicReport) {
  Result r = cli("unbox " + corpusPath("mono.ubx") + " --report=json");
  ASSERT_EQ(r.exit, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["boxesRemoved"], j["boxesTotal"]);
  EXPECT_GT(j["boxesTotal"].get<int>(), 0);
}

TEST(Cli, Check) {
  Result r = cli("check " + corpusPath("id.ubx"));
  EXPECT_EQ(r.exit, 0);
  EXPECT_EQ(r.out, "ok: int\n");
}

TEST(Cli, CorpusExitCodesAndValues) {
  for (const char* dir : {"mono", "poly", "misc"}) {
    for (const auto& c : ubxtest::corpus(dir)) {
      Result r = cli("run " + corpusPath(c.name + ".ubx"));
      EXPECT_EQ(r.exit, 0) << c.name;
      EXPECT_EQ(trimmed(r.out), c.expect) << c.name;
    }
  }
}

TEST(Cli, OptimizedProgramRunsToTheSameValue) {
  auto out = scratch("opt.ubx");
  for (const auto& c : ubxtest::corpus("poly")) {
    ASSERT_EQ(cli("unbox " + corpusPath(c.name + ".ubx") + " -o '" + out.string() + "'").exit, 0);
    Result r = cli("run '" + out.string() + "'");
    EXPECT_EQ(r.exit, 0) << c.name;
    EXPECT_EQ(trimmed(r.out), c.expect) << c.name;
  }
}

TEST(Cli, UserErrorsExitOne) {
  auto bad = scratch("bad.ubx");
  std::ofstream(bad) << "(prim + 1";
  EXPECT_EQ(cli("run '" + bad.string() + "'").exit, 1);
  auto illTyped = scratch("ill.ubx");
  std::ofstream(illTyped) << "(unbox 1)";
  Result r = cli("check '" + illTyped.string() + "'", true);
  EXPECT_EQ(r.exit, 1);
  EXPECT_NE(r.out.find("error["), std::string::npos);
  EXPECT_EQ(cli("run /nonexistent/file.ubx").exit, 1);
  EXPECT_EQ(cli("").exit, 1);
  EXPECT_EQ(cli("frobnicate").exit, 1);
  EXPECT_EQ(cli("unbox " + corpusPath("id.ubx") + " --keep '#999'").exit, 1);
  EXPECT_EQ(cli("unbox " + corpusPath("id.ubx") + " --report=yaml").exit, 1);
}

TEST(Cli, OutOfFuelExitsOne) {
  EXPECT_EQ(cli("run " + corpusPath("mono.ubx") + " --fuel 3").exit, 1);
}

TEST(Cli, HelpExitsZero) { EXPECT_EQ(cli("--help").exit, 0); }

TEST(Cli, TraceLines) {
  Result r = cli("run " + corpusPath("mono/unbox_box.ubx") + " --trace");
  EXPECT_EQ(r.exit, 0);
  EXPECT_EQ(r.out.rfind("step=0 ctl=#0 heap=0 safe=yes\n", 0), 0u);
  EXPECT_EQ(r.out.find("safe=no"), std::string::npos);
  EXPECT_NE(r.out.find("\n5\n"), std::string::npos);
}

TEST(Cli, AnalyzeJson) {
  Result r = cli("analyze " + corpusPath("mono/param.ubx") + " --json");
  ASSERT_EQ(r.exit, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["binderFlow"]["2"], nlohmann::json::array({6}));
}

TEST(Cli, KeepDirective) {
  Result r = cli("unbox " + corpusPath("mono/param.ubx") + " --keep '#6' --report=json");
  ASSERT_EQ(r.exit, 0);
  auto j = nlohmann::json::parse(r.out);
  EXPECT_EQ(j["boxesRemoved"], 0);
  EXPECT_EQ(j["pins"][0]["reason"], "ExplicitKeepDirective");
}

TEST(Cli, ModulesEndToEnd) {
  auto opt = scratch("one-opt.ubxm");
  auto desc = scratch("one.ubxi");
  Result m = cli("unbox-module " + corpusPath("modules/one.ubxm") + " --mode descriptor -o '" +
                 opt.string() + "' --descriptor-out '" + desc.string() + "'");
  ASSERT_EQ(m.exit, 0);
  std::string units = "'" + opt.string() + "' " + corpusPath("modules/user.ubxm");
  std::string main = " --main " + corpusPath("modules/main.ubx");
  Result linked = cli("link " + units + main + " --descriptor '" + desc.string() + "' --run");
  EXPECT_EQ(linked.exit, 0);
  EXPECT_EQ(linked.out, "2\n");
  EXPECT_EQ(cli("link " + units + main + " --run").exit, 1);
}

TEST(Cli, Gen) {
  Result a = cli("gen --seed 42");
  Result b = cli("gen --seed 42");
  EXPECT_EQ(a.exit, 0);
  EXPECT_EQ(a.out, b.out);
  Result leaf = cli("gen --seed 3 --depth 1");
  EXPECT_EQ(leaf.exit, 0);
  EXPECT_NO_THROW(std::stoll(leaf.out));
}

TEST(Cli, DiffExitCodes) {
  auto dir = scratch("failures");
  std::string env = "UBX_FAILURE_DIR='" + dir.string() + "' ";
  EXPECT_EQ(cli("diff --trials 30 --seed 1").exit, 0);
  std::string cmd = env + "'" + UBX_BINARY + "' diff --trials 30 --seed 1 --inject-fault >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  EXPECT_EQ(WEXITSTATUS(status), 2);
  EXPECT_FALSE(std::filesystem::is_empty(dir));
  std::filesystem::remove_all(dir);
}
