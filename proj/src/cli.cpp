#include "caprelab/cli.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "caprelab/benchgen.hpp"
#include "caprelab/graph_builder.hpp"
#include "caprelab/hints.hpp"
#include "caprelab/model_io.hpp"
#include "caprelab/simulator.hpp"
#include "json.hpp"

namespace caprelab {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

struct InputError : Error {
  using Error::Error;
};

struct Options {
  std::string model, dataset, trace, hints, out;
  std::string policy = "capre";
  std::string format = "table";
  std::string emitGraph;
  int nodes = 4;
  long long remote = 100;
  long long local = 0;
  int channels = 4;
  std::uint64_t seed = 0;
  int repeats = 1;
  std::size_t cacheCapacity = 0;
  long long overhead = 0;
  bool deterministic = false;
  bool noDedup = false;
  bool transitive = false;
  std::string events;
  // benchgen
  std::string family = "bank";
  std::string size = "small";
  BenchmarkSpec spec;
};

void setup_logging() {
  auto logger = spdlog::get("caprelab");
  if (!logger) {
    logger = spdlog::stderr_color_mt("caprelab");
    spdlog::set_default_logger(logger);
  }
  const char* env = std::getenv("CAPRELAB_LOG");
  const std::string level = env ? env : "error";
  if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else if (level == "info")
    spdlog::set_level(spdlog::level::info);
  else
    spdlog::set_level(spdlog::level::err);
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw InputError(flag + " is required");
}

ApplicationModel load_model(const Options& o) {
  require(o.model, "--model");
  if (!fs::exists(o.model)) throw InputError("model file '" + o.model + "' does not exist");
  ApplicationModel m = parse_application(o.model);
  const auto report = validate_model(m);
  if (!report.ok()) throw InputError("model is invalid:\n" + report.to_json_lines());
  spdlog::info("loaded {} types, {} instructions", m.types.size(), m.instruction_count());
  return m;
}

Dataset load_data(const Options& o) {
  require(o.dataset, "--dataset");
  if (!fs::exists(o.dataset)) throw InputError("dataset file '" + o.dataset + "' does not exist");
  return load_dataset(o.dataset);
}

WorkloadTrace load_workload(const Options& o) {
  require(o.trace, "--trace");
  if (!fs::exists(o.trace)) throw InputError("trace file '" + o.trace + "' does not exist");
  return load_trace(o.trace);
}

std::set<MethodRef> trace_methods(const WorkloadTrace& t) {
  std::set<MethodRef> out;
  for (const auto& s : t.steps) out.insert(s.method);
  return out;
}

HintMap hints_for(const Options& o, const ApplicationModel& m, const WorkloadTrace* trace, bool dedup) {
  if (!o.hints.empty()) {
    if (!fs::exists(o.hints)) throw InputError("hint file '" + o.hints + "' does not exist");
    return load_hints(o.hints, m);
  }
  AnalysisOptions a;
  a.dedup = dedup;
  a.mode = o.transitive ? DedupMode::transitive : DedupMode::single;
  if (trace) a.extraEntryPoints = trace_methods(*trace);
  spdlog::info("no hint file given, running the analysis");
  return analyze_hints(m, a);
}

StoreConfig store_config(const Options& o) {
  StoreConfig c;
  c.numNodes = o.nodes;
  c.remoteFetchLatency = o.remote;
  c.localHitLatency = o.local;
  c.channelsPerNode = o.channels;
  c.rngSeed = o.seed;
  try {
    c.policy = PolicySpec::parse(o.policy);
  } catch (const Error& e) {
    throw InputError(e.what());
  }
  if (o.cacheCapacity > 0) c.cacheCapacity = o.cacheCapacity;
  c.schedulerOverhead = o.overhead;
  if (c.numNodes < 1 || c.channelsPerNode < 1) throw InputError("--nodes and --channels must be at least 1");
  if (c.remoteFetchLatency < 0 || c.localHitLatency < 0 || c.schedulerOverhead < 0)
    throw InputError("latencies and overheads must be non-negative");
  return c;
}

void emit(const Options& o, std::ostream& out, const std::string& text, const std::string& file) {
  if (o.out.empty()) {
    out << text;
    return;
  }
  fs::create_directories(o.out);
  write_text_file(fs::path(o.out) / file, text);
  out << "wrote " << (fs::path(o.out) / file).string() << "\n";
}

ordered_json metrics_json(const RunMetrics& m) {
  ordered_json j;
  j["hits"] = m.hits;
  j["misses"] = m.misses;
  j["prefetched_total"] = m.prefetchedTotal;
  j["used"] = m.prefetchedUsed;
  j["unused"] = m.prefetchedUnused;
  j["completion_time"] = m.completionTime;
  j["demand_accesses"] = m.demandAccesses;
  j["late_hits"] = m.lateHits;
  j["reads"] = m.reads;
  j["prefetch_tasks"] = m.prefetchTasks;
  ordered_json per = ordered_json::object();
  for (const auto& [k, s] : m.perMethodBreakdown)
    per[k] = {{"activations", s.activations}, {"hits", s.hits}, {"misses", s.misses}};
  j["per_method"] = per;
  return j;
}

std::string table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], r[i].size());
    }
  std::ostringstream s;
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < r.size(); ++i) {
      s << std::left << std::setw(static_cast<int>(width[i])) << r[i];
      if (i + 1 < r.size()) s << "  ";
    }
    s << "\n";
  }
  return s.str();
}

std::string fixed(double v, int digits = 2) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

std::string file_name(const MethodRef& ref) { return ref.owner + "." + ref.method; }

// --------------------------------------------------------------- subcommands

int cmd_analyze(const Options& o, std::ostream& out) {
  const ApplicationModel m = load_model(o);
  const auto start = std::chrono::steady_clock::now();
  GraphCache cache(m);
  cache.build_all();
  const double ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();

  if (!o.emitGraph.empty() && o.emitGraph != "dot" && o.emitGraph != "json")
    throw InputError("--emit-graph takes dot or json");
  if (!o.out.empty()) {
    fs::create_directories(o.out);
    const bool dot = o.emitGraph != "json";
    write_text_file(fs::path(o.out) / (dot ? "type_graph.dot" : "type_graph.json"),
                    dot ? type_graph_to_dot(cache.type_graph()) : type_graph_to_json(cache.type_graph()));
    for (const auto& [ref, ag] : cache.augmented_graphs())
      write_text_file(fs::path(o.out) / (file_name(ref) + (dot ? ".dot" : ".json")),
                      dot ? method_graph_to_dot(ag) : method_graph_to_json(ag));
  } else if (!o.emitGraph.empty()) {
    out << (o.emitGraph == "dot" ? type_graph_to_dot(cache.type_graph()) : type_graph_to_json(cache.type_graph()));
    for (const auto& [ref, ag] : cache.augmented_graphs())
      out << (o.emitGraph == "dot" ? method_graph_to_dot(ag) : method_graph_to_json(ag));
  }

  if (o.format == "json") {
    ordered_json j;
    j["methods"] = ordered_json::array();
    for (const auto& [ref, ag] : cache.augmented_graphs())
      j["methods"].push_back({{"method", ref.str()},
                              {"navigation_nodes", ag.navigation_count()},
                              {"edges", ag.edges.size()},
                              {"types", ag.distinct_types().size()},
                              {"branch_dependent", ag.has_branch_dependent()},
                              {"truncated", ag.truncated}});
    j["analyzed_methods"] = cache.augmented_graphs().size();
    j["instructions"] = m.instruction_count();
    if (!o.deterministic) {
      j["analysis_ms"] = ms;
      j["generated_at"] = timestamp();
    }
    out << j.dump(2) << "\n";
    return kExitOk;
  }
  std::vector<std::vector<std::string>> rows{{"method", "nav_nodes", "edges", "types", "flags"}};
  if (o.format == "csv") rows.clear();
  for (const auto& [ref, ag] : cache.augmented_graphs()) {
    std::string flags;
    if (ag.has_branch_dependent()) flags += "branch-dependent ";
    if (ag.truncated) flags += "truncated ";
    if (ag.excludedOverride) flags += "override-excluded ";
    if (!flags.empty()) flags.pop_back();
    rows.push_back({ref.str(), std::to_string(ag.navigation_count()), std::to_string(ag.edges.size()),
                    std::to_string(ag.distinct_types().size()), flags.empty() ? "-" : flags});
  }
  if (o.format == "csv") {
    out << "method,nav_nodes,edges,types,flags\n";
    for (const auto& r : rows) out << r[0] << "," << r[1] << "," << r[2] << "," << r[3] << "," << r[4] << "\n";
  } else {
    out << table(rows);
  }
  out << "analyzed " << cache.augmented_graphs().size() << " methods";
  if (!o.deterministic) out << " in " << fixed(ms, 3) << " ms";
  out << "\n";
  return kExitOk;
}

int cmd_hints(const Options& o, std::ostream& out) {
  const ApplicationModel m = load_model(o);
  AnalysisOptions a;
  a.dedup = !o.noDedup;
  a.mode = o.transitive ? DedupMode::transitive : DedupMode::single;
  emit(o, out, hints_to_json(analyze_hints(m, a)), "hints.json");
  return kExitOk;
}

std::string render_runs(const Options& o, const std::vector<std::pair<PolicySpec, RunMetrics>>& runs,
                        std::uint64_t seed) {
  if (o.format == "json") {
    ordered_json j;
    j["seed"] = seed;
    if (!o.deterministic) j["generated_at"] = timestamp();
    j["runs"] = ordered_json::array();
    for (const auto& [p, m] : runs) {
      ordered_json r = metrics_json(m);
      r["policy"] = p.name();
      j["runs"].push_back(std::move(r));
    }
    return j.dump(2) + "\n";
  }
  if (o.format == "csv") {
    std::string s = metrics_csv_header() + "\n";
    for (const auto& [p, m] : runs) s += metrics_csv_row(p, m) + "\n";
    return s;
  }
  std::vector<std::vector<std::string>> rows{
      {"policy", "hits", "misses", "prefetched", "used", "unused", "completion", "hit_rate"}};
  for (const auto& [p, m] : runs)
    rows.push_back({p.name(), std::to_string(m.hits), std::to_string(m.misses), std::to_string(m.prefetchedTotal),
                    std::to_string(m.prefetchedUsed), std::to_string(m.prefetchedUnused),
                    std::to_string(m.completionTime), fixed(m.hit_rate(), 4)});
  return table(rows);
}

int cmd_simulate(const Options& o, std::ostream& out) {
  const ApplicationModel m = load_model(o);
  const Dataset ds = load_data(o);
  const WorkloadTrace t = load_workload(o);
  const StoreConfig cfg = store_config(o);
  const HintMap hints = cfg.policy.kind == PolicySpec::Kind::capre ? hints_for(o, m, &t, true) : HintMap{};
  RunOptions ro;
  ro.recordEvents = !o.events.empty();
  const RunResult r = run_workload_detailed(m, hints, ds, t, cfg, ro);
  if (!o.events.empty()) {
    std::string lines;
    for (const auto& e : r.events) {
      ordered_json j{{"kind", e.kind}, {"time", e.time}, {"oid", e.oid}, {"node", e.node},
                     {"lane", e.lane}, {"prefetch", e.prefetch}};
      j["parent"] = e.parent ? ordered_json(*e.parent) : ordered_json(nullptr);
      lines += j.dump() + "\n";
    }
    write_text_file(o.events, lines);
  }
  const std::string ext = o.format == "table" ? "txt" : o.format;
  emit(o, out, render_runs(o, {{cfg.policy, r.metrics}}, cfg.rngSeed), "metrics." + ext);
  return kExitOk;
}

int cmd_compare(const Options& o, std::ostream& out) {
  const ApplicationModel m = load_model(o);
  const Dataset ds = load_data(o);
  const WorkloadTrace t = load_workload(o);
  if (o.repeats < 1) throw InputError("--repeats must be at least 1");
  StoreConfig cfg = store_config(o);
  const HintMap hints = hints_for(o, m, &t, true);
  const auto policies = default_policies();
  std::vector<std::vector<double>> times(policies.size());
  std::vector<std::vector<double>> reductions(policies.size());
  std::vector<std::vector<double>> hitRates(policies.size());
  if (!o.out.empty()) fs::create_directories(o.out);
  for (int r = 0; r < o.repeats; ++r) {
    cfg.rngSeed = o.seed + static_cast<std::uint64_t>(r);
    spdlog::info("comparing policies with seed {}", cfg.rngSeed);
    const ComparisonReport report = compare_policies(m, hints, ds, t, cfg, policies);
    std::string csv = metrics_csv_header() + "\n";
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
      const auto& row = report.rows[i];
      csv += metrics_csv_row(row.policy, row.metrics) + "\n";
      times[i].push_back(static_cast<double>(row.metrics.completionTime));
      reductions[i].push_back(row.reductionPct);
      hitRates[i].push_back(row.metrics.hit_rate());
    }
    if (!o.out.empty()) write_text_file(fs::path(o.out) / ("metrics_seed" + std::to_string(cfg.rngSeed) + ".csv"), csv);
  }
  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  auto stddev = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double mu = mean(v);
    double s = 0;
    for (double x : v) s += (x - mu) * (x - mu);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
  };
  std::string summary;
  if (o.format == "json") {
    ordered_json j;
    j["repeats"] = o.repeats;
    j["first_seed"] = o.seed;
    if (!o.deterministic) j["generated_at"] = timestamp();
    j["policies"] = ordered_json::array();
    for (std::size_t i = 0; i < policies.size(); ++i)
      j["policies"].push_back({{"policy", policies[i].name()},
                               {"completion_mean", mean(times[i])},
                               {"completion_stddev", stddev(times[i])},
                               {"reduction_pct_mean", mean(reductions[i])},
                               {"hit_rate_mean", mean(hitRates[i])}});
    summary = j.dump(2) + "\n";
  } else {
    std::vector<std::vector<std::string>> rows{
        {"policy", "completion_mean", "completion_stddev", "reduction_pct_mean", "hit_rate_mean"}};
    for (std::size_t i = 0; i < policies.size(); ++i)
      rows.push_back({policies[i].name(), fixed(mean(times[i])), fixed(stddev(times[i])), fixed(mean(reductions[i])),
                      fixed(mean(hitRates[i]), 4)});
    if (o.format == "csv") {
      for (const auto& r : rows) summary += r[0] + "," + r[1] + "," + r[2] + "," + r[3] + "," + r[4] + "\n";
    } else {
      summary = table(rows);
    }
  }
  if (!o.out.empty()) {
    const std::string ext = o.format == "table" ? "txt" : o.format;
    write_text_file(fs::path(o.out) / ("summary." + ext), summary);
  }
  out << summary;
  return kExitOk;
}

int cmd_oracle_check(const Options& o, std::ostream& out) {
  const ApplicationModel m = load_model(o);
  const Dataset ds = load_data(o);
  const WorkloadTrace t = load_workload(o);
  const HintMap hints = hints_for(o, m, &t, false);
  const auto verdicts = oracle_check(m, hints, ds, t, o.seed);
  bool violation = false;
  if (o.format == "json") {
    ordered_json j = ordered_json::array();
    for (const auto& v : verdicts) {
      j.push_back({{"method", v.method.str()}, {"verdict", v.verdict}, {"outside", v.outside},
                   {"unreached", v.unreached}});
      violation |= v.violation();
    }
    out << j.dump(2) << "\n";
  } else {
    for (const auto& v : verdicts) {
      out << v.method.str() << " " << v.verdict;
      if (!v.outside.empty()) {
        out << " outside:";
        for (const auto& p : v.outside) out << " " << p;
      }
      out << "\n";
      violation |= v.violation();
    }
  }
  return violation ? kExitViolation : kExitOk;
}

int cmd_benchgen(Options o, std::ostream& out) {
  require(o.out, "--out");
  o.spec.family = o.family;
  o.spec.size = o.size;
  o.spec.seed = o.seed;
  const Benchmark b = generate(o.spec);
  const fs::path dir(o.out);
  fs::create_directories(dir / "traces");
  write_text_file(dir / "model.json", serialize_application(b.model));
  write_text_file(dir / "dataset.json", dataset_to_json(b.dataset));
  for (const auto& [name, t] : b.traces) write_text_file(dir / "traces" / (name + ".json"), trace_to_json(t));
  out << "generated " << o.family << ": " << b.model.types.size() << " types, " << b.dataset.objects.size()
      << " objects, " << b.traces.size() << " traces in " << dir.string() << "\n";
  return kExitOk;
}

void add_inputs(CLI::App* c, Options& o, bool dataset) {
  c->add_option("--model", o.model, "application model (JSON)");
  if (dataset) {
    c->add_option("--dataset", o.dataset, "object records (JSON)");
    c->add_option("--trace", o.trace, "workload trace (JSON)");
    c->add_option("--hints", o.hints, "hint file; generated when absent");
    c->add_option("--seed", o.seed, "run seed");
  }
  c->add_option("--format", o.format, "csv, json or table")->check(CLI::IsMember({"csv", "json", "table"}));
  c->add_option("--out", o.out, "output directory");
  c->add_flag("--deterministic", o.deterministic, "omit timestamps and wall times");
}

void add_store(CLI::App* c, Options& o) {
  c->add_option("--policy", o.policy, "none, rop:<d> or capre");
  c->add_option("--nodes", o.nodes, "storage nodes");
  c->add_option("--remote-latency", o.remote, "remote fetch latency");
  c->add_option("--local-latency", o.local, "local hit latency");
  c->add_option("--channels", o.channels, "fetch lanes per node");
  c->add_option("--cache-capacity", o.cacheCapacity, "LRU capacity in objects (0 = unbounded)");
  c->add_option("--scheduler-overhead", o.overhead, "virtual time per prefetch task");
  c->add_flag("--transitive", o.transitive, "let callers cover hints through their own callers");
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  setup_logging();
  Options o;
  CLI::App app{"caprelab: code-analysis prefetching for persistent object stores"};
  app.require_subcommand(1);
  auto* analyze = app.add_subcommand("analyze", "build type graphs and report per-method counts");
  add_inputs(analyze, o, false);
  analyze->add_option("--emit-graph", o.emitGraph, "dot or json graph dumps");
  auto* hints = app.add_subcommand("hints", "generate prefetching hints");
  add_inputs(hints, o, false);
  hints->add_flag("--no-dedup", o.noDedup, "keep hints covered by every caller");
  hints->add_flag("--transitive", o.transitive, "let callers cover hints through their own callers");
  auto* simulate = app.add_subcommand("simulate", "run one policy");
  add_inputs(simulate, o, true);
  add_store(simulate, o);
  simulate->add_option("--events", o.events, "write fetch events as JSON lines");
  auto* compare = app.add_subcommand("compare", "run none, rop:1,3,5,10 and capre");
  add_inputs(compare, o, true);
  add_store(compare, o);
  compare->add_option("--repeats", o.repeats, "seeds to run, starting at --seed");
  auto* oracle = app.add_subcommand("oracle-check", "compare demanded paths with predicted paths");
  add_inputs(oracle, o, true);
  oracle->add_flag("--transitive", o.transitive, "unused; accepted for symmetry");
  auto* bench = app.add_subcommand("benchgen", "generate a benchmark model, dataset and traces");
  bench->add_option("--family", o.family, "bank, oo7, wordcount, kmeans or graph");
  bench->add_option("--size", o.size, "oo7: small, medium or large-scaled");
  bench->add_option("--seed", o.seed, "generator seed");
  bench->add_option("--out", o.out, "output directory");
  bench->add_option("--transactions", o.spec.transactions, "bank: transactions");
  bench->add_option("--files", o.spec.files, "wordcount: texts");
  bench->add_option("--words", o.spec.wordsTotal, "wordcount: total words");
  bench->add_option("--chunks", o.spec.chunksPerText, "wordcount: chunks per text");
  bench->add_option("--vectors", o.spec.vectors, "kmeans: input vectors");
  bench->add_option("--clusters", o.spec.clusters, "kmeans: clusters");
  bench->add_option("--dims", o.spec.dims, "kmeans: dimensions");
  bench->add_option("--iterations", o.spec.iterations, "kmeans: iterations");
  bench->add_option("--vertices", o.spec.vertices, "graph: vertices");
  bench->add_option("--edges", o.spec.edges, "graph: edges");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  try {
    if (analyze->parsed()) return cmd_analyze(o, out);
    if (hints->parsed()) return cmd_hints(o, out);
    if (simulate->parsed()) return cmd_simulate(o, out);
    if (compare->parsed()) return cmd_compare(o, out);
    if (oracle->parsed()) return cmd_oracle_check(o, out);
    if (bench->parsed()) return cmd_benchgen(o, out);
  } catch (const InputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ParseError& e) {
    err << "parse error: " << e.what() << "\n";
    return kExitInput;
  } catch (const ResolveError& e) {
    err << "resolve error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DatasetError& e) {
    err << "dataset error: " << e.what() << "\n";
    return kExitInput;
  } catch (const SpecError& e) {
    err << "invalid benchmark parameters: " << e.what() << "\n";
    return kExitInput;
  } catch (const HintError& e) {
    err << "hint error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const TraceError& e) {
    err << "trace error: " << e.what() << "\n";
    return kExitRuntime;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitInput;
}

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run_cli(args, out, err);
}

}  // namespace caprelab
