#pragma once

// Prefetching hints: generation from augmented graphs, caller-based dedup,
// the referenced-objects baseline, and the hint file format.

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "caprelab/graph_builder.hpp"

namespace caprelab {

struct Hint {
  std::string sourceType;
  FieldPath path;

  friend auto operator<=>(const Hint&, const Hint&) = default;
  friend bool operator==(const Hint&, const Hint&) = default;
};

struct HintSet {
  MethodRef methodRef;
  std::vector<Hint> hints;  // sorted, maximal paths only

  /// Adds a path; drops it when implied by a longer one and removes any
  /// stored prefixes of it.
  void add(const std::string& sourceType, FieldPath path);
  bool contains(const FieldPath& path) const;
  std::vector<std::string> strings(bool markers = true) const;
  bool empty() const { return hints.empty(); }

  friend bool operator==(const HintSet&, const HintSet&) = default;
};

using HintMap = std::map<MethodRef, HintSet>;

/// Every non-empty prefix of every hint.
std::set<FieldPath> prefix_closure(const HintSet& hs);

/// Maximal receiver-rooted paths of the graph. Subtrees that are conditional
/// only inside an inlined callee are left to that callee's own hints.
HintSet generate_hints(const AugmentedTypeGraph& ag);

struct CallSite {
  MethodRef caller;
  int ii = 0;
  /// Receiver paths from the caller's receiver; nullopt when the receiver is
  /// not reachable from it (parameter-rooted or untracked).
  std::optional<std::vector<FieldPath>> receiverPaths;
};

struct CallGraph {
  std::map<MethodRef, std::set<MethodRef>> callers;
  std::map<MethodRef, std::vector<CallSite>> sites;  // keyed by callee
  std::set<MethodRef> entryPoints;
};

/// Call graph over every invokemethod of a user-defined method.
CallGraph build_call_graph(GraphCache& cache, const std::set<MethodRef>& extraEntryPoints = {});

enum class DedupMode {
  single,      // compare against the direct callers' hints only
  transitive,  // a caller may also cover a hint through its own callers
};

HintMap dedup_hints(const HintMap& all, const CallGraph& cg, DedupMode mode = DedupMode::single);

/// Referenced-objects baseline: single-association paths of length <= depth.
/// A type is not revisited along a path except by its final step.
HintSet rop_hints(const std::string& root, int depth, const AppTypeGraph& g);

struct AnalysisOptions {
  bool dedup = true;
  DedupMode mode = DedupMode::single;
  std::set<MethodRef> extraEntryPoints;
};

/// Whole-program analysis: graphs, hints and (optionally) dedup.
HintMap analyze_hints(const ApplicationModel& model, const AnalysisOptions& options = {});
HintMap generate_all_hints(GraphCache& cache);

/// Hint file: {"Owner.method": ["a@collection.b", ...]}.
std::string hints_to_json(const HintMap& hints);
HintMap hints_from_json_text(std::string_view text, const ApplicationModel& model);
HintMap load_hints(const std::filesystem::path& path, const ApplicationModel& model);
/// Throws HintError when a path does not walk the type graph from its owner.
void check_hint_paths(const HintMap& hints, const ApplicationModel& model, const AppTypeGraph& g);

}  // namespace caprelab
