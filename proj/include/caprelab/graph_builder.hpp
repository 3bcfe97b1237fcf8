#pragma once

// Application type graph and per-method (augmented) navigation graphs.

#include <compare>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "caprelab/ir_model.hpp"

namespace caprelab {

struct Assoc {
  std::string targetType;
  Cardinality cardinality = Cardinality::single;

  friend bool operator==(const Assoc&, const Assoc&) = default;
};

struct AppTypeGraph {
  std::vector<std::string> nodes;  // every declared type, sorted
  std::map<std::pair<std::string, std::string>, Assoc> assoc;

  const Assoc* find(std::string_view type, std::string_view field) const;
  bool has_node(std::string_view type) const;
  /// Associations leaving `type`, sorted by field name.
  std::vector<std::pair<std::string, Assoc>> out(std::string_view type) const;
};

AppTypeGraph build_app_type_graph(const ApplicationModel& model);

/// One step of a field path.
struct PathStep {
  std::string field;
  Cardinality cardinality = Cardinality::single;

  friend auto operator<=>(const PathStep&, const PathStep&) = default;
  friend bool operator==(const PathStep&, const PathStep&) = default;
};
using FieldPath = std::vector<PathStep>;

/// "a.b.c"; with markers, collection steps read "b@collection".
std::string format_path(const FieldPath& path, bool markers = true);
/// Inverse of format_path(path, true). Throws HintError on empty segments.
FieldPath parse_path(std::string_view text);

using NodeId = int;
inline constexpr NodeId kNoNode = -1;

struct NavNode {
  NodeId id = kNoNode;
  NodeId parent = kNoNode;
  std::string varId;                    // first variable that materialized the node
  std::optional<std::string> viaField;  // absent for the receiver and parameter roots
  std::string typeName;
  Cardinality cardinality = Cardinality::single;
  bool branchDependent = false;
  /// Branch-dependent only because the navigation is conditional inside an
  /// inlined callee; the callee's own hints cover it.
  bool inheritedBranchDependent = false;
  bool isReturnNode = false;
  std::optional<int> paramIndex;  // set on parameter roots
};

/// An invokemethod of a user-defined method inside the graph's own body.
struct CallSiteInfo {
  int ii = 0;
  MethodRef callee;
  std::vector<NodeId> receiverNodes;  // empty when the receiver has no navigation node
  bool inlined = false;
};

struct AugmentedTypeGraph {
  MethodRef methodRef;
  NodeId root = 0;
  std::vector<NavNode> nodes;  // index == id; parents precede children
  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<NodeId> paramRoots;  // per parameter; kNoNode for primitives
  bool truncated = false;          // a recursive call was cut
  bool excludedOverride = false;   // a call to an overridden method was not inlined
  std::vector<CallSiteInfo> callSites;

  const NavNode& node(NodeId id) const { return nodes.at(static_cast<std::size_t>(id)); }
  const std::vector<NodeId>& children(NodeId id) const;
  NodeId child(NodeId parent, std::string_view field) const;
  /// Path from the node's root.
  FieldPath path_of(NodeId id) const;
  NodeId root_of(NodeId id) const;
  /// Nodes reached through a field (everything but the roots).
  std::size_t navigation_count() const;
  std::set<std::string> distinct_types() const;
  bool has_branch_dependent() const;

  /// Filled by the builder; children lists in creation order.
  std::vector<std::vector<NodeId>> adjacency;
};

/// Per-method navigation graph; invocations are not followed.
AugmentedTypeGraph build_method_graph(const ApplicationModel& model, const MethodRef& ref,
                                      const AppTypeGraph& g);

/// Memo table for whole-program analysis. Every method's graphs are built at
/// most once; counters expose how often each builder actually ran.
class GraphCache {
 public:
  explicit GraphCache(const ApplicationModel& model);

  const ApplicationModel& model() const { return model_; }
  const AppTypeGraph& type_graph() const { return g_; }

  const AugmentedTypeGraph& intra(const MethodRef& ref);
  const AugmentedTypeGraph& augmented(const MethodRef& ref);

  /// Builds the augmented graph of every declared method in declaration order.
  void build_all();

  /// True while the augmented graph of `ref` is being built (call-graph cycle).
  bool in_progress(const MethodRef& ref) const;

  int intra_builds(const MethodRef& ref) const;
  int augmented_builds(const MethodRef& ref) const;
  const std::map<MethodRef, AugmentedTypeGraph>& augmented_graphs() const { return augmented_; }

 private:
  const ApplicationModel& model_;
  AppTypeGraph g_;
  std::unordered_map<MethodRef, AugmentedTypeGraph, MethodRefHash> intra_;
  std::map<MethodRef, AugmentedTypeGraph> augmented_;
  std::unordered_map<MethodRef, const AugmentedTypeGraph*, MethodRefHash> augmentedIndex_;
  std::unordered_map<MethodRef, int, MethodRefHash> intraCount_;
  std::unordered_map<MethodRef, int, MethodRefHash> augmentedCount_;
  std::unordered_set<MethodRef, MethodRefHash> inProgress_;
};

AugmentedTypeGraph build_augmented_graph(const MethodRef& ref, const ApplicationModel& model,
                                         const AppTypeGraph& g, GraphCache& cache);

std::string type_graph_to_dot(const AppTypeGraph& g);
std::string type_graph_to_json(const AppTypeGraph& g);
std::string method_graph_to_dot(const AugmentedTypeGraph& ag);
std::string method_graph_to_json(const AugmentedTypeGraph& ag);

}  // namespace caprelab
