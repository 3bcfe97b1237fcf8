#pragma once

// Virtual-time simulation of a distributed persistent object store running
// IR workloads under a prefetch policy, plus the dynamic path oracle.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "caprelab/graph_builder.hpp"
#include "caprelab/hints.hpp"
#include "caprelab/ir_model.hpp"

namespace caprelab {

using Oid = std::int64_t;
using VTime = std::int64_t;

// ------------------------------------------------------------------- dataset

struct ObjectRecord {
  Oid oid = 0;
  std::string typeName;
  std::map<std::string, std::optional<Oid>> singles;
  std::map<std::string, std::vector<Oid>> collections;
  std::map<std::string, std::string> prims;  // JSON text of the value
  std::optional<int> nodeId;                 // explicit placement
};

struct Dataset {
  std::vector<ObjectRecord> objects;
};

Dataset dataset_from_json_text(std::string_view text);
Dataset load_dataset(const std::filesystem::path& path);
std::string dataset_to_json(const Dataset& ds);

// --------------------------------------------------------------------- trace

struct BranchOracleSpec {
  enum class Mode { probability, fixed, scripted };
  Mode mode = Mode::probability;
  double p = 0.5;  // probability of the first arm
  /// fixed: arm name, or its index when the text is all digits.
  std::string fixedArm = "0";
  /// scripted: arms chosen per step, consumed in evaluation order; the first
  /// arm is used once a step's script runs out.
  std::vector<std::vector<std::string>> script;
};

struct TraceStep {
  MethodRef method;
  Oid root = 0;
};

struct WorkloadTrace {
  std::string name;
  std::vector<TraceStep> steps;
  BranchOracleSpec branchOracle;
};

WorkloadTrace trace_from_json_text(std::string_view text);
WorkloadTrace load_trace(const std::filesystem::path& path);
std::string trace_to_json(const WorkloadTrace& trace);

// --------------------------------------------------------------------- store

struct PolicySpec {
  enum class Kind { none, rop, capre };
  Kind kind = Kind::none;
  int depth = 0;  // rop only

  std::string name() const;
  /// "none", "capre" or "rop:<d>" with d >= 1.
  static PolicySpec parse(std::string_view text);
  static PolicySpec none() { return {}; }
  static PolicySpec capre() { return {Kind::capre, 0}; }
  static PolicySpec rop(int d) { return {Kind::rop, d}; }

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

struct StoreConfig {
  int numNodes = 4;
  VTime remoteFetchLatency = 100;
  VTime localHitLatency = 0;
  int channelsPerNode = 4;
  PolicySpec policy;
  std::uint64_t rngSeed = 0;
  std::optional<std::size_t> cacheCapacity;  // LRU when set
  VTime schedulerOverhead = 0;               // per prefetch task
};

struct TypeLayout {
  std::string name;
  bool persistent = true;
  std::vector<std::string> singles;
  std::vector<std::string> collections;
  std::vector<std::string> prims;
  int single_index(std::string_view field) const;
  int collection_index(std::string_view field) const;
  int prim_index(std::string_view field) const;
};

struct StoredObject {
  Oid oid = 0;
  int type = 0;
  int node = 0;
  std::vector<int> singles;  // dense object index, -1 for null
  std::vector<std::vector<int>> collections;
  std::vector<std::string> prims;
};

struct StoreState {
  int numNodes = 1;
  std::vector<TypeLayout> layouts;
  std::unordered_map<std::string, int> typeIndex;
  std::vector<StoredObject> objects;
  std::unordered_map<Oid, int> byOid;

  int index_of(Oid oid) const;  // -1 when absent
  const TypeLayout& layout_of(int obj) const { return layouts[static_cast<std::size_t>(objects[static_cast<std::size_t>(obj)].type)]; }
  bool persistent(int obj) const { return layout_of(obj).persistent; }
  std::vector<std::size_t> objects_per_node() const;
};

/// Resolves references and places objects on nodes: explicit nodeIds are
/// honoured, collection elements are spread round-robin from a seeded
/// offset, everything else follows a global round-robin counter.
StoreState build_store(const Dataset& dataset, const ApplicationModel& model, const StoreConfig& cfg);

// ------------------------------------------------------------------- metrics

struct MethodStats {
  std::uint64_t activations = 0;
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  friend bool operator==(const MethodStats&, const MethodStats&) = default;
};

struct RunMetrics {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t prefetchedTotal = 0;
  std::uint64_t prefetchedUsed = 0;
  std::uint64_t prefetchedUnused = 0;
  VTime completionTime = 0;
  std::uint64_t demandAccesses = 0;
  std::uint64_t lateHits = 0;  // demand accesses that waited on an in-flight prefetch
  std::uint64_t reads = 0;
  std::uint64_t readDigest = 0;
  std::uint64_t prefetchTasks = 0;
  std::map<std::string, MethodStats> perMethodBreakdown;

  double hit_rate() const { return demandAccesses == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(demandAccesses); }
  friend bool operator==(const RunMetrics&, const RunMetrics&) = default;
};

struct FetchEvent {
  std::string kind;  // "start" or "complete"
  VTime time = 0;
  Oid oid = 0;
  int node = 0;
  int lane = -1;  // -1 for demand fetches
  bool prefetch = false;
  std::optional<Oid> parent;  // object whose field led the prefetch here
};

struct RunOptions {
  bool recordReads = false;
  bool recordEvents = false;
  bool recordPredicted = false;
};

struct RunResult {
  RunMetrics metrics;
  std::vector<std::string> reads;  // "R oid.field=value", "W ...", "B Method#branch=arm"
  std::vector<FetchEvent> events;
  std::set<Oid> predicted;  // every object a prefetch task resolved
};

/// Throws TraceError for a missing root or an undeclared step method and
/// HintError for hints that do not walk the type graph.
RunMetrics run_workload(const ApplicationModel& model, const HintMap& hints, const Dataset& dataset,
                        const WorkloadTrace& trace, const StoreConfig& cfg);
RunResult run_workload_detailed(const ApplicationModel& model, const HintMap& hints, const Dataset& dataset,
                                const WorkloadTrace& trace, const StoreConfig& cfg, const RunOptions& options);

struct PolicyResult {
  PolicySpec policy;
  RunMetrics metrics;
  double reductionPct = 0.0;  // completion time reduction against "none"
};

struct ComparisonReport {
  std::uint64_t seed = 0;
  std::vector<PolicyResult> rows;
  const PolicyResult* find(const PolicySpec& p) const;
};

/// none, rop:1, rop:3, rop:5, rop:10, capre
std::vector<PolicySpec> default_policies();
ComparisonReport compare_policies(const ApplicationModel& model, const HintMap& hints, const Dataset& dataset,
                                  const WorkloadTrace& trace, const StoreConfig& cfg,
                                  const std::vector<PolicySpec>& policies = default_policies());

std::string metrics_csv_header();
std::string metrics_csv_row(const PolicySpec& policy, const RunMetrics& m);

// -------------------------------------------------------------------- oracle

using PathSetMap = std::map<MethodRef, std::set<FieldPath>>;

/// Navigation paths demanded by each executed method (including those done by
/// its callees), rooted at the method's receiver. No cache, no prefetching.
PathSetMap oracle_accessed_paths(const ApplicationModel& model, const Dataset& dataset,
                                 const WorkloadTrace& trace, std::uint64_t seed);

struct OracleVerdict {
  MethodRef method;
  std::string verdict;  // exact, superset(...), under-approx(truncated), VIOLATION
  std::vector<std::string> outside;    // oracle paths the analysis does not predict
  std::vector<std::string> unreached;  // predicted paths the run never demanded
  bool violation() const { return verdict == "VIOLATION"; }
};

/// Compares oracle paths of every executed method with the predicted paths:
/// the prefix closure of its hints plus its branch-dependent graph paths.
std::vector<OracleVerdict> oracle_check(const ApplicationModel& model, const HintMap& hints, const Dataset& dataset,
                                        const WorkloadTrace& trace, std::uint64_t seed);

}  // namespace caprelab
