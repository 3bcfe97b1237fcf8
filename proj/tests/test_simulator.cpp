#include <map>

#include "caprelab/benchgen.hpp"
#include "caprelab/error.hpp"
#include "caprelab/hints.hpp"
#include "caprelab/model_io.hpp"
#include "caprelab/simulator.hpp"
#include "doctest.h"
#include "support/random_model.hpp"

using namespace caprelab;

namespace {

const std::string kFixtures = CAPRELAB_FIXTURES;

struct Bank {
  ApplicationModel model = parse_application(kFixtures + "/bank.app.json");
  Dataset dataset = load_dataset(kFixtures + "/bank.dataset.json");
  WorkloadTrace trace = load_trace(kFixtures + "/bank.trace.json");
};

Benchmark family(const std::string& name) {
  BenchmarkSpec s;
  s.family = name;
  return generate(s);
}

HintMap hints_for(const ApplicationModel& m, const WorkloadTrace& t) {
  AnalysisOptions a;
  for (const auto& s : t.steps) a.extraEntryPoints.insert(s.method);
  return analyze_hints(m, a);
}

StoreConfig cfg_with(PolicySpec p, std::uint64_t seed = 1) {
  StoreConfig c;
  c.policy = p;
  c.rngSeed = seed;
  return c;
}

void check_accounting(const RunMetrics& m) {
  CHECK(m.prefetchedUsed + m.prefetchedUnused == m.prefetchedTotal);
  CHECK(m.hits + m.misses == m.demandAccesses);
  CHECK(m.lateHits <= m.hits);
  std::uint64_t hits = 0, misses = 0;
  for (const auto& [name, s] : m.perMethodBreakdown) {
    hits += s.hits;
    misses += s.misses;
  }
  CHECK(hits == m.hits);
  CHECK(misses == m.misses);
}

Dataset flat_dataset(int n) {
  Dataset ds;
  for (int i = 1; i <= n; ++i) {
    ObjectRecord r;
    r.oid = static_cast<Oid>(i);
    r.typeName = "Department";
    r.prims["name"] = "d" + std::to_string(i);
    ds.objects.push_back(r);
  }
  return ds;
}

}  // namespace

TEST_CASE("placement spreads objects evenly") {
  const Bank b;
  StoreConfig c;
  c.numNodes = 4;
  const StoreState s = build_store(flat_dataset(8), b.model, c);
  CHECK(s.objects_per_node() == std::vector<std::size_t>{2, 2, 2, 2});
  c.numNodes = 1;
  CHECK(build_store(flat_dataset(8), b.model, c).objects_per_node() == std::vector<std::size_t>{8});
  c.numNodes = 0;
  CHECK_THROWS_AS(build_store(flat_dataset(8), b.model, c), PlacementError);
}

TEST_CASE("bank collection elements spread over nodes") {
  const Benchmark bank = family("bank");
  for (std::uint64_t seed : {0u, 1u, 7u}) {
    StoreConfig c;
    c.numNodes = 4;
    c.rngSeed = seed;
    const StoreState s = build_store(bank.dataset, bank.model, c);
    std::map<int, int> perNode;
    for (const auto& o : s.objects)
      if (s.layouts[static_cast<std::size_t>(o.type)].name == "Transaction") ++perNode[o.node];
    REQUIRE(perNode.size() == 4);
    for (const auto& [node, n] : perNode) CHECK(n == 25);
  }
}

TEST_CASE("placement is deterministic per seed") {
  const Benchmark oo7 = family("oo7");
  StoreConfig c;
  c.rngSeed = 5;
  const StoreState a = build_store(oo7.dataset, oo7.model, c);
  const StoreState b = build_store(oo7.dataset, oo7.model, c);
  for (std::size_t i = 0; i < a.objects.size(); ++i) CHECK(a.objects[i].node == b.objects[i].node);
}

TEST_CASE("without prefetching every miss costs one remote fetch") {
  for (const std::string name : {"bank", "oo7", "wordcount"}) {
    const Benchmark b = family(name);
    for (const auto& [tn, t] : b.traces) {
      const RunMetrics m = run_workload(b.model, {}, b.dataset, t, cfg_with(PolicySpec::none()));
      CHECK(m.prefetchedTotal == 0);
      CHECK(m.hits + m.misses == m.demandAccesses);
      CHECK(m.completionTime == static_cast<VTime>(m.misses) * 100);
    }
  }
}

TEST_CASE("identical inputs give identical metrics") {
  const Benchmark b = family("oo7");
  const auto& t = b.traces.at("t1");
  const HintMap h = hints_for(b.model, t);
  for (const auto& p : default_policies()) {
    const RunMetrics x = run_workload(b.model, h, b.dataset, t, cfg_with(p, 9));
    const RunMetrics y = run_workload(b.model, h, b.dataset, t, cfg_with(p, 9));
    CHECK(x == y);
  }
}

TEST_CASE("update traversal: capre fetches almost nothing it does not use") {
  const Benchmark b = family("oo7");
  const auto& t = b.traces.at("t2b");
  const auto r = compare_policies(b.model, hints_for(b.model, t), b.dataset, t, cfg_with(PolicySpec::none()),
                                  {PolicySpec::rop(1), PolicySpec::capre()});
  const auto& rop = r.find(PolicySpec::rop(1))->metrics;
  const auto& capre = r.find(PolicySpec::capre())->metrics;
  CHECK(rop.prefetchedUnused > 0);
  CHECK(capre.prefetchedUnused <= capre.demandAccesses / 20);
}

TEST_CASE("run invariants over random cases") {
  for (std::uint64_t seed = 0; seed < 60; ++seed) {
    testing::RandomModelOptions o;
    o.branches = true;
    o.puts = true;
    o.emptyCollections = true;
    const auto c = testing::random_case(seed, o);
    const HintMap h = hints_for(c.model, c.trace);
    RunOptions ro;
    ro.recordReads = true;
    ro.recordEvents = true;
    std::vector<std::string> baseline;
    RunMetrics none;
    for (const auto& p : default_policies()) {
      for (std::optional<std::size_t> cap : {std::optional<std::size_t>{}, std::optional<std::size_t>{4}}) {
        StoreConfig cfg = cfg_with(p, seed);
        cfg.cacheCapacity = cap;
        cfg.numNodes = 1 + static_cast<int>(seed % 4);
        cfg.channelsPerNode = 1 + static_cast<int>(seed % 3);
        const RunResult r = run_workload_detailed(c.model, h, c.dataset, c.trace, cfg, ro);
        check_accounting(r.metrics);
        if (p == PolicySpec::none() && !cap) {
          baseline = r.reads;
          none = r.metrics;
        }
        // Prefetching never changes what the program reads or decides.
        CHECK(r.reads == baseline);
        // Events come out in time order.
        for (std::size_t i = 1; i < r.events.size(); ++i) CHECK(r.events[i - 1].time <= r.events[i].time);
        if (p == PolicySpec::capre() && !cap) {
          CHECK(r.metrics.misses <= none.misses);
          CHECK(r.metrics.completionTime <= none.completionTime);
        }
      }
    }
  }
}

TEST_CASE("a chained prefetch starts only after its parent arrived") {
  for (const std::string name : {"bank", "oo7", "graph"}) {
    const Benchmark b = family(name);
    for (const auto& [tn, t] : b.traces) {
      RunOptions ro;
      ro.recordEvents = true;
      for (const auto& p : {PolicySpec::capre(), PolicySpec::rop(3)}) {
        const RunResult r = run_workload_detailed(b.model, hints_for(b.model, t), b.dataset, t, cfg_with(p), ro);
        std::map<Oid, VTime> arrived;
        for (const auto& e : r.events) {
          if (e.kind == "complete" && !arrived.contains(e.oid)) arrived[e.oid] = e.time;
          if (e.kind == "start" && e.prefetch && e.parent) {
            auto it = arrived.find(*e.parent);
            // The parent was either fetched earlier or is non-persistent.
            if (it != arrived.end()) CHECK(it->second <= e.time);
          }
        }
        // Parallel lanes really are used for collections under capre.
        if (p == PolicySpec::capre() && name == "bank") {
          std::map<VTime, int> startsAt;
          for (const auto& e : r.events)
            if (e.kind == "start" && e.prefetch) ++startsAt[e.time];
          int most = 0;
          for (const auto& [time, n] : startsAt) most = std::max(most, n);
          CHECK(most > 1);
        }
      }
    }
  }
}

TEST_CASE("oracle paths of the bank example") {
  Bank b;
  b.trace.steps.clear();
  CHECK(oracle_accessed_paths(b.model, b.dataset, b.trace, 1).empty());

  Bank e;
  e.trace.branchOracle.mode = BranchOracleSpec::Mode::fixed;
  e.trace.branchOracle.fixedArm = "else";
  const auto paths = oracle_accessed_paths(e.model, e.dataset, e.trace, 1);
  const auto& getAccount = paths.at({"Transaction", "getAccount"});
  CHECK(getAccount.contains(parse_path("emp.dept")));
  CHECK(getAccount.contains(parse_path("emp")));
  CHECK(getAccount.contains(parse_path("type")));
  CHECK(getAccount.contains(parse_path("account")));

  // Everything demanded lies in the prefix closure of the caller's hints plus
  // the branch-dependent navigation.
  GraphCache cache(e.model);
  const auto closure = prefix_closure(generate_hints(cache.augmented({"BankManagement", "setAllTransCustomers"})));
  for (const auto& p : paths.at({"BankManagement", "setAllTransCustomers"}))
    CHECK((closure.contains(p) || format_path(p, false) == "transactions.emp.dept"));
}

TEST_CASE("oracle verdicts on the bank example") {
  Bank b;
  AnalysisOptions raw;
  raw.dedup = false;
  const HintMap h = analyze_hints(b.model, raw);
  b.trace.branchOracle.mode = BranchOracleSpec::Mode::fixed;
  b.trace.branchOracle.fixedArm = "then";
  std::map<std::string, std::string> verdicts;
  for (const auto& v : oracle_check(b.model, h, b.dataset, b.trace, 1)) verdicts[v.method.str()] = v.verdict;
  CHECK(verdicts.at("BankManagement.setAllTransCustomers") == "superset(branch-dependent)");
  CHECK(verdicts.at("Transaction.getAccount") == "superset(branch-dependent)");
  CHECK(verdicts.at("Account.setCustomer") == "exact");

  // Dropping a hint the run needs is caught.
  HintMap broken = h;
  broken[{"Account", "setCustomer"}].hints.clear();
  bool violation = false;
  for (const auto& v : oracle_check(b.model, broken, b.dataset, b.trace, 1))
    if (v.method.str() == "Account.setCustomer") violation = v.violation();
  CHECK(violation);
}

TEST_CASE("branch-free methods are exact") {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto c = testing::random_case(seed);
    GraphCache cache(c.model);
    for (const auto& v : oracle_check(c.model, generate_all_hints(cache), c.dataset, c.trace, seed))
      CHECK(v.verdict == "exact");
  }
}

TEST_CASE("trace and hint errors") {
  const Bank b;
  WorkloadTrace t = b.trace;
  t.steps[0].root = 999;
  CHECK_THROWS_AS(run_workload(b.model, {}, b.dataset, t, cfg_with(PolicySpec::none())), TraceError);
  CHECK_THROWS_AS(oracle_accessed_paths(b.model, b.dataset, t, 1), TraceError);
  t = b.trace;
  t.steps[0].method = {"BankManagement", "audit"};
  CHECK_THROWS_AS(run_workload(b.model, {}, b.dataset, t, cfg_with(PolicySpec::none())), TraceError);
  // Root of the wrong type for the step's method.
  t = b.trace;
  t.steps[0].root = 14;
  CHECK_THROWS_AS(run_workload(b.model, {}, b.dataset, t, cfg_with(PolicySpec::none())), TraceError);

  HintMap bad;
  HintSet hs;
  hs.methodRef = {"Transaction", "getAccount"};
  hs.add("Transaction", parse_path("account.manager"));
  bad[hs.methodRef] = hs;
  CHECK_THROWS_AS(run_workload(b.model, bad, b.dataset, b.trace, cfg_with(PolicySpec::capre())), HintError);
}

TEST_CASE("config and file errors") {
  const Bank b;
  StoreConfig c = cfg_with(PolicySpec::rop(0));
  CHECK_THROWS(run_workload(b.model, {}, b.dataset, b.trace, c));
  c = cfg_with(PolicySpec::none());
  c.remoteFetchLatency = -1;
  CHECK_THROWS(run_workload(b.model, {}, b.dataset, b.trace, c));
  CHECK(PolicySpec::parse("rop:3") == PolicySpec::rop(3));
  CHECK(PolicySpec::parse("capre") == PolicySpec::capre());
  CHECK_THROWS(PolicySpec::parse("rop:x"));
  CHECK_THROWS_AS(dataset_from_json_text(R"([{"oid": 1}])"), Error);
  CHECK_THROWS_AS(trace_from_json_text(R"({"steps": [{"method": "A"}]})"), Error);
  // Dangling reference in a dataset.
  Dataset ds = b.dataset;
  ds.objects[0].singles["manager"] = 4242;
  CHECK_THROWS_AS(build_store(ds, b.model, StoreConfig{}), DatasetError);
}

TEST_CASE("dataset and trace files round trip") {
  const Bank b;
  const Dataset again = dataset_from_json_text(dataset_to_json(b.dataset));
  CHECK(dataset_to_json(again) == dataset_to_json(b.dataset));
  const WorkloadTrace t = trace_from_json_text(trace_to_json(b.trace));
  CHECK(trace_to_json(t) == trace_to_json(b.trace));
}

TEST_CASE("comparison report") {
  const Bank b;
  const auto r = compare_policies(b.model, hints_for(b.model, b.trace), b.dataset, b.trace, cfg_with(PolicySpec::none()));
  REQUIRE(r.rows.size() == 6);
  CHECK(r.rows[0].policy == PolicySpec::none());
  CHECK(r.rows[0].reductionPct == 0.0);
  const auto* capre = r.find(PolicySpec::capre());
  REQUIRE(capre);
  const double expected = 100.0 * static_cast<double>(r.rows[0].metrics.completionTime - capre->metrics.completionTime) /
                          static_cast<double>(r.rows[0].metrics.completionTime);
  CHECK(capre->reductionPct == doctest::Approx(expected));
  CHECK(metrics_csv_header().rfind("policy,hits,misses,prefetched_total,used,unused,completion_time", 0) == 0);
  CHECK(metrics_csv_row(PolicySpec::capre(), capre->metrics).rfind("capre,", 0) == 0);
}
