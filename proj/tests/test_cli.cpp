#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "caprelab/cli.hpp"
#include "doctest.h"
#include "json.hpp"

using namespace caprelab;
namespace fs = std::filesystem;

namespace {

const std::string kFixtures = CAPRELAB_FIXTURES;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("caprelab_test_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const std::string bankModel = kFixtures + "/bank.app.json";
const std::string bankData = kFixtures + "/bank.dataset.json";
const std::string bankTrace = kFixtures + "/bank.trace.json";

}  // namespace

TEST_CASE("analyze the bank model") {
  const auto r = cli({"analyze", "--model", bankModel, "--format", "json", "--deterministic"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  REQUIRE(j["methods"].size() == 3);
  for (const auto& m : j["methods"])
    if (m["method"] == "BankManagement.setAllTransCustomers") CHECK(m["navigation_nodes"] == 9);
  CHECK_FALSE(j.contains("wallMs"));
  const auto table = cli({"analyze", "--model", bankModel});
  CHECK(table.code == kExitOk);
  CHECK(table.out.find("analyzed 3 methods") != std::string::npos);
}

TEST_CASE("analyze writes graph dumps") {
  const fs::path dir = scratch("dumps");
  REQUIRE(cli({"analyze", "--model", bankModel, "--emit-graph", "dot", "--out", dir.string()}).code == kExitOk);
  CHECK(fs::exists(dir / "type_graph.dot"));
  CHECK(slurp(dir / "BankManagement.setAllTransCustomers.dot").find("digraph") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("analyze an empty model") {
  const fs::path dir = scratch("empty");
  write(dir / "empty.json", R"({"types": [], "entryPoints": []})");
  const auto r = cli({"analyze", "--model", (dir / "empty.json").string(), "--format", "csv"});
  CHECK(r.code == kExitOk);
  fs::remove_all(dir);
}

TEST_CASE("input errors exit 2") {
  const fs::path dir = scratch("bad");
  write(dir / "bad.json", "{\n  \"types\": [\n    {\"name\": }\n  ]\n}\n");
  const auto r = cli({"analyze", "--model", (dir / "bad.json").string()});
  CHECK(r.code == kExitInput);
  CHECK(r.err.find("line 3") != std::string::npos);
  CHECK(cli({"analyze", "--model", (dir / "missing.json").string()}).code == kExitInput);
  CHECK(cli({"analyze"}).code == kExitInput);
  CHECK(cli({"frobnicate"}).code == kExitInput);
  CHECK(cli({"simulate", "--model", bankModel, "--dataset", bankData, "--trace", bankTrace, "--policy", "rop:x"}).code ==
        kExitInput);
  CHECK(cli({"simulate", "--model", bankModel, "--dataset", bankData, "--trace", bankTrace, "--nodes", "0"}).code ==
        kExitInput);
  write(dir / "trace.json", R"({"steps": 3})");
  CHECK(cli({"simulate", "--model", bankModel, "--dataset", bankData, "--trace", (dir / "trace.json").string()}).code ==
        kExitInput);
  CHECK(cli({"benchgen", "--family", "spreadsheet", "--out", dir.string()}).code == kExitInput);
  // A model that parses but does not validate.
  auto doc = nlohmann::json::parse(slurp(bankModel));
  doc["types"][1]["methods"][0]["instructions"][1]["use"] = {"v99"};
  write(dir / "invalid.json", doc.dump());
  const auto v = cli({"analyze", "--model", (dir / "invalid.json").string()});
  CHECK(v.code == kExitInput);
  CHECK(v.err.find("undefined-var") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("runtime errors exit 3") {
  const fs::path dir = scratch("runtime");
  write(dir / "hints.json", R"({"Transaction.getAccount": ["account.manager"]})");
  const auto r = cli({"oracle-check", "--model", bankModel, "--dataset", bankData, "--trace", bankTrace, "--hints",
                      (dir / "hints.json").string()});
  CHECK(r.code == kExitRuntime);
  CHECK(r.err.find("account.manager") != std::string::npos);
  auto trace = nlohmann::json::parse(slurp(bankTrace));
  trace["steps"][0]["root"] = 999;
  write(dir / "trace.json", trace.dump());
  const auto t = cli({"simulate", "--model", bankModel, "--dataset", bankData, "--trace", (dir / "trace.json").string()});
  CHECK(t.code == kExitRuntime);
  fs::remove_all(dir);
}

TEST_CASE("hints subcommand") {
  const auto r = cli({"hints", "--model", bankModel});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  CHECK(j["Transaction.getAccount"] == nlohmann::json::array({"emp.dept"}));
  const auto raw = nlohmann::json::parse(cli({"hints", "--model", bankModel, "--no-dedup"}).out);
  CHECK(raw["Transaction.getAccount"].size() == 3);
}

TEST_CASE("simulate prints metrics") {
  const auto r = cli({"simulate", "--model", bankModel, "--dataset", bankData, "--trace", bankTrace, "--policy", "none",
                      "--format", "csv"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.rfind("policy,hits,misses,prefetched_total,used,unused,completion_time", 0) == 0);
  const fs::path dir = scratch("events");
  const auto e = cli({"simulate", "--model", bankModel, "--dataset", bankData, "--trace", bankTrace, "--events",
                      (dir / "events.jsonl").string()});
  CHECK(e.code == kExitOk);
  std::istringstream lines(slurp(dir / "events.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) {
    CHECK(nlohmann::json::parse(line).contains("time"));
    ++n;
  }
  CHECK(n > 0);
  fs::remove_all(dir);
}

TEST_CASE("compare writes one CSV per seed") {
  const fs::path dir = scratch("compare");
  const auto r = cli({"compare", "--model", bankModel, "--dataset", bankData, "--trace", bankTrace, "--repeats", "3",
                      "--seed", "10", "--out", dir.string(), "--format", "csv", "--deterministic"});
  REQUIRE(r.code == kExitOk);
  std::size_t rows = 0;
  for (int s = 10; s < 13; ++s) {
    const fs::path f = dir / ("metrics_seed" + std::to_string(s) + ".csv");
    REQUIRE(fs::exists(f));
    std::istringstream in(slurp(f));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line))
      if (!line.empty()) ++rows;
  }
  CHECK(rows == 6 * 3);
  CHECK(fs::exists(dir / "summary.csv"));
  fs::remove_all(dir);
}

TEST_CASE("oracle-check verdicts") {
  const fs::path dir = scratch("oracle");
  auto trace = nlohmann::json::parse(slurp(bankTrace));
  trace["branchOracle"] = {{"mode", "fixed"}, {"arm", "then"}};
  write(dir / "then.json", trace.dump());
  const auto r = cli({"oracle-check", "--model", bankModel, "--dataset", bankData, "--trace",
                      (dir / "then.json").string(), "--format", "json"});
  REQUIRE(r.code == kExitOk);
  const auto j = nlohmann::json::parse(r.out);
  bool seen = false;
  for (const auto& v : j)
    if (v["method"] == "BankManagement.setAllTransCustomers") {
      CHECK(v["verdict"] == "superset(branch-dependent)");
      seen = true;
    }
  CHECK(seen);

  const auto s = cli({"oracle-check", "--model", kFixtures + "/straight.app.json", "--dataset",
                      kFixtures + "/straight.dataset.json", "--trace", kFixtures + "/straight.trace.json", "--format",
                      "json"});
  REQUIRE(s.code == kExitOk);
  for (const auto& v : nlohmann::json::parse(s.out)) CHECK(v["verdict"] == "exact");

  // A hint set missing a demanded path is a property violation.
  write(dir / "thin.json", R"({"Account.setCustomer": []})");
  const auto bad = cli({"oracle-check", "--model", bankModel, "--dataset", bankData, "--trace", bankTrace, "--hints",
                        (dir / "thin.json").string()});
  CHECK(bad.code == kExitViolation);
  fs::remove_all(dir);
}

TEST_CASE("deterministic output is byte-identical") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  for (const auto& dir : {a, b}) {
    REQUIRE(cli({"benchgen", "--family", "oo7", "--seed", "3", "--out", (dir / "bench").string()}).code == kExitOk);
    REQUIRE(cli({"compare", "--model", (dir / "bench/model.json").string(), "--dataset",
                 (dir / "bench/dataset.json").string(), "--trace", (dir / "bench/traces/t1.json").string(), "--out",
                 (dir / "cmp").string(), "--format", "json", "--deterministic"})
                .code == kExitOk);
  }
  CHECK(slurp(a / "bench/dataset.json") == slurp(b / "bench/dataset.json"));
  CHECK(slurp(a / "cmp/summary.json") == slurp(b / "cmp/summary.json"));
  CHECK(slurp(a / "cmp/metrics_seed0.csv") == slurp(b / "cmp/metrics_seed0.csv"));
  const auto x = cli({"analyze", "--model", bankModel, "--format", "json", "--deterministic"});
  const auto y = cli({"analyze", "--model", bankModel, "--format", "json", "--deterministic"});
  CHECK(x.out == y.out);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("installed binary honours the exit-code contract") {
  const std::string bin = CAPRELAB_CLI;
  auto status = [](const std::string& cmd) {
    const int s = std::system((cmd + " >/dev/null 2>&1").c_str());
    return WIFEXITED(s) ? WEXITSTATUS(s) : -1;
  };
  CHECK(status(bin + " analyze --model " + bankModel) == 0);
  CHECK(status(bin + " analyze --model /nonexistent.json") == 2);
  CHECK(status("CAPRELAB_LOG=debug " + bin + " hints --model " + bankModel) == 0);
}
