#include "caprelab/simulator.hpp"

#include <algorithm>
#include <deque>
#include <limits>
#include <list>
#include <queue>

#include "interpreter.hpp"

namespace caprelab {

namespace {

using detail::CompiledProgram;
using detail::FieldClass;

// Hint paths compiled against store layouts.
struct Trie {
  struct Node {
    FieldClass cls = FieldClass::none;
    int slot = -1;
    std::vector<int> kids;
  };
  std::vector<Node> nodes{Node{}};
  bool empty() const { return nodes.size() == 1; }
};

Trie compile_trie(const HintSet& hs, const std::string& rootType, const StoreState& store, const AppTypeGraph& g) {
  Trie t;
  for (const auto& h : hs.hints) {
    int at = 0;
    std::string type = rootType;
    for (const auto& step : h.path) {
      const Assoc* a = g.find(type, step.field);
      if (!a || a->cardinality != step.cardinality)
        throw HintError("hint '" + format_path(h.path) + "' is not a walk from " + rootType);
      const TypeLayout& l = store.layouts[static_cast<std::size_t>(store.typeIndex.at(type))];
      const FieldClass cls = step.cardinality == Cardinality::collection ? FieldClass::collection : FieldClass::single;
      const int slot = cls == FieldClass::collection ? l.collection_index(step.field) : l.single_index(step.field);
      int next = -1;
      for (int k : t.nodes[static_cast<std::size_t>(at)].kids)
        if (t.nodes[static_cast<std::size_t>(k)].cls == cls && t.nodes[static_cast<std::size_t>(k)].slot == slot) next = k;
      if (next < 0) {
        next = static_cast<int>(t.nodes.size());
        t.nodes.push_back({cls, slot, {}});
        t.nodes[static_cast<std::size_t>(at)].kids.push_back(next);
      }
      at = next;
      type = a->targetType;
    }
  }
  return t;
}

enum class Residency : std::uint8_t { absent, inflight, resident };

struct Event {
  VTime time;
  std::uint64_t seq;
  int type;  // 0 fetch complete, 1 walker step, 2 task start
  int a;
  int b;
  int c;
  bool operator>(const Event& o) const { return time != o.time ? time > o.time : seq > o.seq; }
};

struct Walker {
  int obj;
  int node;  // trie node
  std::size_t nextKid = 0;
  int parent = -1;
  int pending = 0;
  const Trie* trie = nullptr;
};

class Engine : public detail::InterpreterHooks {
 public:
  Engine(StoreState& store, const CompiledProgram& program, const ApplicationModel& model, const HintMap& hints,
         const StoreConfig& cfg, const RunOptions& options, RunResult& out)
      : store_(store), program_(program), g_(build_app_type_graph(model)), cfg_(cfg), options_(options), out_(out) {
    const std::size_t n = store.objects.size();
    state_.assign(n, Residency::absent);
    readyAt_.assign(n, 0);
    prefetchedUnused_.assign(n, 0);
    inflightPrefetch_.assign(n, 0);
    lruPos_.resize(n);
    inLru_.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i)
      if (!store.persistent(static_cast<int>(i))) state_[i] = Residency::resident;
    freeLanes_.assign(static_cast<std::size_t>(store.numNodes), std::vector<bool>(static_cast<std::size_t>(cfg.channelsPerNode), true));
    queues_.resize(static_cast<std::size_t>(store.numNodes));
    methodTries_.resize(program.methods.size());
    if (cfg.policy.kind == PolicySpec::Kind::capre) {
      check_hint_paths(hints, model, g_);
      for (const auto& [ref, hs] : hints) {
        const int m = program.find(ref);
        if (m >= 0) methodTries_[static_cast<std::size_t>(m)] = compile_trie(hs, ref.owner, store, g_);
      }
    }
    if (cfg.policy.kind == PolicySpec::Kind::rop) {
      for (const auto& l : store.layouts) {
        ropTries_.push_back(compile_trie(rop_hints(l.name, cfg.policy.depth, g_), l.name, store, g_));
      }
    }
  }

  void begin_step(const MethodRef& method) { stepMethod_ = method.str(); }

  void on_enter(int method, int self) override {
    stack_.push_back(method);
    sync();
    ++stats().activations;
    const Trie& t = methodTries_[static_cast<std::size_t>(method)];
    if (!t.empty()) enqueue_task(self, &t);
  }

  void on_exit(int) override { stack_.pop_back(); }

  void on_access(int obj) override {
    sync();
    auto& m = out_.metrics;
    auto& ms = stats();
    ++m.demandAccesses;
    const auto i = static_cast<std::size_t>(obj);
    switch (state_[i]) {
      case Residency::resident:
        ++m.hits;
        ++ms.hits;
        now_ += cfg_.localHitLatency;
        touch(obj);
        mark_used(obj);
        break;
      case Residency::inflight: {
        ++m.hits;
        ++ms.hits;
        ++m.lateHits;
        now_ = std::max(readyAt_[i], now_ + cfg_.localHitLatency);
        sync();
        mark_used(obj);
        break;
      }
      case Residency::absent: {
        ++m.misses;
        ++ms.misses;
        start_fetch(obj, -1, false, -1);
        if (cfg_.policy.kind == PolicySpec::Kind::rop) {
          const Trie& t = ropTries_[static_cast<std::size_t>(store_.objects[i].type)];
          if (!t.empty()) enqueue_task(obj, &t);
        }
        now_ += cfg_.remoteFetchLatency;
        sync();
        break;
      }
    }
  }

  void finish() {
    out_.metrics.completionTime = now_;
    advance(std::numeric_limits<VTime>::max());
    auto& m = out_.metrics;
    m.prefetchedUnused = m.prefetchedTotal - m.prefetchedUsed;
  }

 private:
  MethodStats& stats() {
    const std::string& key = stack_.empty() ? stepMethod_ : program_.methods[static_cast<std::size_t>(stack_.back())].name;
    return out_.metrics.perMethodBreakdown[key];
  }

  void push(VTime t, int type, int a, int b = 0, int c = 0) { events_.push({t, seq_++, type, a, b, c}); }

  // Process background events up to the main-thread clock.
  void sync() {
    advance(now_);
    clock_ = now_;
  }

  void advance(VTime until) {
    while (!events_.empty() && events_.top().time <= until) {
      Event e = events_.top();
      events_.pop();
      clock_ = e.time;
      switch (e.type) {
        case 0:
          fetch_done(e.a, e.b, e.c);
          break;
        case 1:
          step_walker(e.a);
          break;
        default:
          start_task();
          break;
      }
    }
  }

  void log(const char* kind, VTime t, int obj, int lane, bool prefetch, int parentObj) {
    if (!options_.recordEvents) return;
    FetchEvent ev;
    ev.kind = kind;
    ev.time = t;
    ev.oid = store_.objects[static_cast<std::size_t>(obj)].oid;
    ev.node = store_.objects[static_cast<std::size_t>(obj)].node;
    ev.lane = lane;
    ev.prefetch = prefetch;
    if (parentObj >= 0) ev.parent = store_.objects[static_cast<std::size_t>(parentObj)].oid;
    out_.events.push_back(std::move(ev));
  }

  void start_fetch(int obj, int lane, bool prefetch, int parentObj) {
    const auto i = static_cast<std::size_t>(obj);
    state_[i] = Residency::inflight;
    inflightPrefetch_[i] = prefetch ? 1 : 0;
    readyAt_[i] = clock_ + cfg_.remoteFetchLatency;
    if (prefetch) ++out_.metrics.prefetchedTotal;
    fetchParent_[obj] = parentObj;
    log("start", clock_, obj, lane, prefetch, parentObj);
    push(readyAt_[i], 0, obj, lane, prefetch ? 1 : 0);
  }

  void fetch_done(int obj, int lane, int prefetch) {
    const auto i = static_cast<std::size_t>(obj);
    state_[i] = Residency::resident;
    if (prefetch) prefetchedUnused_[i] = 1;
    int parentObj = -1;
    if (auto it = fetchParent_.find(obj); it != fetchParent_.end()) {
      parentObj = it->second;
      fetchParent_.erase(it);
    }
    log("complete", clock_, obj, lane, prefetch != 0, parentObj);
    touch(obj);
    if (auto it = waiters_.find(obj); it != waiters_.end()) {
      std::vector<int> ws = std::move(it->second);
      waiters_.erase(it);
      for (int w : ws) push(clock_, 1, w);
    }
    if (lane >= 0) {
      const auto node = static_cast<std::size_t>(store_.objects[i].node);
      freeLanes_[node][static_cast<std::size_t>(lane)] = true;
      serve(static_cast<int>(node));
    }
  }

  void mark_used(int obj) {
    const auto i = static_cast<std::size_t>(obj);
    if (state_[i] == Residency::resident && prefetchedUnused_[i]) {
      prefetchedUnused_[i] = 0;
      ++out_.metrics.prefetchedUsed;
    }
  }

  void touch(int obj) {
    if (!cfg_.cacheCapacity || !store_.persistent(obj)) return;
    const auto i = static_cast<std::size_t>(obj);
    if (inLru_[i]) lru_.erase(lruPos_[i]);
    lru_.push_front(obj);
    lruPos_[i] = lru_.begin();
    inLru_[i] = 1;
    while (lru_.size() > *cfg_.cacheCapacity) {
      const int victim = lru_.back();
      lru_.pop_back();
      const auto v = static_cast<std::size_t>(victim);
      inLru_[v] = 0;
      state_[v] = Residency::absent;
      prefetchedUnused_[v] = 0;
    }
  }

  // ----------------------------------------------------------- prefetching

  void enqueue_task(int root, const Trie* trie) {
    tasks_.emplace_back(root, trie);
    if (!busy_) {
      busy_ = true;
      if (cfg_.schedulerOverhead > 0)
        push(clock_ + cfg_.schedulerOverhead, 2, 0);
      else
        start_task();
    }
  }

  void start_task() {
    if (tasks_.empty()) {
      busy_ = false;
      return;
    }
    auto [root, trie] = tasks_.front();
    tasks_.pop_front();
    ++out_.metrics.prefetchTasks;
    spawn(root, 0, -1, trie);
  }

  void task_done() {
    if (tasks_.empty()) {
      busy_ = false;
      return;
    }
    if (cfg_.schedulerOverhead > 0)
      push(clock_ + cfg_.schedulerOverhead, 2, 0);
    else
      start_task();
  }

  void spawn(int obj, int node, int parent, const Trie* trie) {
    const int w = static_cast<int>(walkers_.size());
    walkers_.push_back({obj, node, 0, parent, 0, trie});
    if (options_.recordPredicted) out_.predicted.insert(store_.objects[static_cast<std::size_t>(obj)].oid);
    const auto i = static_cast<std::size_t>(obj);
    switch (state_[i]) {
      case Residency::resident:
        push(clock_, 1, w);
        break;
      case Residency::inflight:
        waiters_[obj].push_back(w);
        break;
      case Residency::absent: {
        const int parentObj = parent >= 0 ? walkers_[static_cast<std::size_t>(parent)].obj : -1;
        queues_[static_cast<std::size_t>(store_.objects[i].node)].push_back({obj, w, parentObj});
        serve(store_.objects[i].node);
        break;
      }
    }
  }

  void serve(int node) {
    auto& q = queues_[static_cast<std::size_t>(node)];
    auto& lanes = freeLanes_[static_cast<std::size_t>(node)];
    while (!q.empty()) {
      auto lane = std::find(lanes.begin(), lanes.end(), true);
      if (lane == lanes.end()) return;
      Request r = q.front();
      q.pop_front();
      const auto i = static_cast<std::size_t>(r.obj);
      if (state_[i] == Residency::resident) {
        push(clock_, 1, r.walker);
        continue;
      }
      waiters_[r.obj].push_back(r.walker);
      if (state_[i] == Residency::inflight) continue;
      *lane = false;
      start_fetch(r.obj, static_cast<int>(lane - lanes.begin()), true, r.parentObj);
    }
  }

  void step_walker(int w) {
    Walker& wk = walkers_[static_cast<std::size_t>(w)];
    const auto& tn = wk.trie->nodes[static_cast<std::size_t>(wk.node)];
    const auto& obj = store_.objects[static_cast<std::size_t>(wk.obj)];
    while (wk.nextKid < tn.kids.size()) {
      const int kid = tn.kids[wk.nextKid++];
      const auto& kn = wk.trie->nodes[static_cast<std::size_t>(kid)];
      if (kn.slot < 0) continue;
      if (kn.cls == FieldClass::single) {
        const int target = obj.singles[static_cast<std::size_t>(kn.slot)];
        if (target < 0) continue;
        wk.pending = 1;
        const Trie* trie = wk.trie;
        spawn(target, kid, w, trie);
        return;
      }
      const auto elems = obj.collections[static_cast<std::size_t>(kn.slot)];
      if (elems.empty()) continue;
      wk.pending = static_cast<int>(elems.size());
      const Trie* trie = wk.trie;
      for (int e : elems) spawn(e, kid, w, trie);
      return;
    }
    const int parent = wk.parent;
    if (parent < 0) {
      task_done();
      return;
    }
    Walker& p = walkers_[static_cast<std::size_t>(parent)];
    if (--p.pending == 0) push(clock_, 1, parent);
  }

  struct Request {
    int obj;
    int walker;
    int parentObj;
  };

  StoreState& store_;
  const CompiledProgram& program_;
  AppTypeGraph g_;
  const StoreConfig& cfg_;
  const RunOptions& options_;
  RunResult& out_;

  VTime now_ = 0;    // main thread
  VTime clock_ = 0;  // event processing
  std::uint64_t seq_ = 0;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> events_;

  std::vector<Residency> state_;
  std::vector<VTime> readyAt_;
  std::vector<std::uint8_t> prefetchedUnused_;
  std::vector<std::uint8_t> inflightPrefetch_;
  std::unordered_map<int, int> fetchParent_;
  std::unordered_map<int, std::vector<int>> waiters_;
  std::list<int> lru_;
  std::vector<std::list<int>::iterator> lruPos_;
  std::vector<std::uint8_t> inLru_;

  std::vector<std::vector<bool>> freeLanes_;
  std::vector<std::deque<Request>> queues_;
  std::deque<std::pair<int, const Trie*>> tasks_;
  bool busy_ = false;
  std::vector<Walker> walkers_;

  std::vector<Trie> methodTries_;
  std::vector<Trie> ropTries_;
  std::vector<int> stack_;
  std::string stepMethod_;
};

void check_config(const StoreConfig& cfg) {
  if (cfg.numNodes < 1) throw PlacementError("numNodes must be at least 1");
  if (cfg.channelsPerNode < 1) throw Error("channelsPerNode must be at least 1");
  if (cfg.remoteFetchLatency < 0 || cfg.localHitLatency < 0 || cfg.schedulerOverhead < 0)
    throw Error("latencies must be non-negative");
  if (cfg.policy.kind == PolicySpec::Kind::rop && cfg.policy.depth < 1) throw Error("rop depth must be at least 1");
  if (cfg.cacheCapacity && *cfg.cacheCapacity == 0) throw Error("cache capacity must be positive");
}

}  // namespace

RunResult run_workload_detailed(const ApplicationModel& model, const HintMap& hints, const Dataset& dataset,
                                const WorkloadTrace& trace, const StoreConfig& cfg, const RunOptions& options) {
  check_config(cfg);
  StoreState store = build_store(dataset, model, cfg);
  const CompiledProgram program = detail::compile_program(model, store);
  RunResult out;
  Engine engine(store, program, model, hints, cfg, options, out);
  detail::BranchOracle oracle(trace.branchOracle, cfg.rngSeed);
  detail::InterpreterOptions io;
  io.keepReadLog = options.recordReads;
  detail::Interpreter interp(program, store, oracle, engine, io);
  for (std::size_t i = 0; i < trace.steps.size(); ++i) {
    engine.begin_step(trace.steps[i].method);
    interp.run_step(trace.steps[i], i);
  }
  engine.finish();
  out.metrics.reads = interp.read_count();
  out.metrics.readDigest = interp.read_digest();
  if (options.recordReads) out.reads = std::move(interp.read_log());
  return out;
}

RunMetrics run_workload(const ApplicationModel& model, const HintMap& hints, const Dataset& dataset,
                        const WorkloadTrace& trace, const StoreConfig& cfg) {
  return run_workload_detailed(model, hints, dataset, trace, cfg, {}).metrics;
}

const PolicyResult* ComparisonReport::find(const PolicySpec& p) const {
  for (const auto& r : rows)
    if (r.policy == p) return &r;
  return nullptr;
}

std::vector<PolicySpec> default_policies() {
  return {PolicySpec::none(), PolicySpec::rop(1), PolicySpec::rop(3),
          PolicySpec::rop(5), PolicySpec::rop(10), PolicySpec::capre()};
}

ComparisonReport compare_policies(const ApplicationModel& model, const HintMap& hints, const Dataset& dataset,
                                  const WorkloadTrace& trace, const StoreConfig& cfg,
                                  const std::vector<PolicySpec>& policies) {
  ComparisonReport report;
  report.seed = cfg.rngSeed;
  VTime baseline = -1;
  {
    StoreConfig c = cfg;
    c.policy = PolicySpec::none();
    baseline = run_workload(model, hints, dataset, trace, c).completionTime;
  }
  for (const auto& p : policies) {
    StoreConfig c = cfg;
    c.policy = p;
    PolicyResult r;
    r.policy = p;
    r.metrics = run_workload(model, hints, dataset, trace, c);
    r.reductionPct = baseline > 0 ? 100.0 * static_cast<double>(baseline - r.metrics.completionTime) /
                                        static_cast<double>(baseline)
                                  : 0.0;
    report.rows.push_back(std::move(r));
  }
  return report;
}

std::string metrics_csv_header() { return "policy,hits,misses,prefetched_total,used,unused,completion_time"; }

std::string metrics_csv_row(const PolicySpec& policy, const RunMetrics& m) {
  return policy.name() + "," + std::to_string(m.hits) + "," + std::to_string(m.misses) + "," +
         std::to_string(m.prefetchedTotal) + "," + std::to_string(m.prefetchedUsed) + "," +
         std::to_string(m.prefetchedUnused) + "," + std::to_string(m.completionTime);
}

// -------------------------------------------------------------------- oracle

PathSetMap oracle_accessed_paths(const ApplicationModel& model, const Dataset& dataset, const WorkloadTrace& trace,
                                 std::uint64_t seed) {
  StoreConfig cfg;
  cfg.numNodes = 1;
  cfg.rngSeed = seed;
  StoreState store = build_store(dataset, model, cfg);
  const CompiledProgram program = detail::compile_program(model, store);
  detail::InterpreterHooks hooks;
  detail::BranchOracle oracle(trace.branchOracle, seed);
  detail::InterpreterOptions io;
  io.trackPaths = true;
  detail::Interpreter interp(program, store, oracle, hooks, io);
  for (std::size_t i = 0; i < trace.steps.size(); ++i) interp.run_step(trace.steps[i], i);
  PathSetMap out;
  for (std::size_t m = 0; m < program.methods.size(); ++m) {
    if (!interp.executed()[m]) continue;
    auto& set = out[program.methods[m].ref];
    for (int id : interp.method_paths()[m]) set.insert(interp.paths().path(id));
  }
  return out;
}

std::vector<OracleVerdict> oracle_check(const ApplicationModel& model, const HintMap& hints, const Dataset& dataset,
                                        const WorkloadTrace& trace, std::uint64_t seed) {
  const PathSetMap observed = oracle_accessed_paths(model, dataset, trace, seed);
  GraphCache cache(model);
  std::vector<OracleVerdict> out;
  for (const auto& [ref, paths] : observed) {
    const AugmentedTypeGraph& ag = cache.augmented(ref);
    std::set<FieldPath> predicted;
    if (auto it = hints.find(ref); it != hints.end()) predicted = prefix_closure(it->second);
    for (const auto& n : ag.nodes) {
      if (!n.branchDependent || ag.root_of(n.id) != ag.root) continue;
      FieldPath p = ag.path_of(n.id);
      for (std::size_t k = 1; k <= p.size(); ++k) predicted.emplace(p.begin(), p.begin() + static_cast<long>(k));
    }
    OracleVerdict v;
    v.method = ref;
    for (const auto& p : paths)
      if (!predicted.contains(p)) v.outside.push_back(format_path(p, true));
    for (const auto& p : predicted)
      if (!paths.contains(p)) v.unreached.push_back(format_path(p, true));
    if (!v.outside.empty())
      v.verdict = ag.truncated || ag.excludedOverride ? "under-approx(truncated)" : "VIOLATION";
    else if (v.unreached.empty())
      v.verdict = "exact";
    else
      v.verdict = ag.has_branch_dependent() ? "superset(branch-dependent)" : "superset(data-dependent)";
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace caprelab
