#include "caprelab/graph_builder.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace caprelab {

// ---------------------------------------------------------------- type graph

const Assoc* AppTypeGraph::find(std::string_view type, std::string_view field) const {
  auto it = assoc.find({std::string(type), std::string(field)});
  return it == assoc.end() ? nullptr : &it->second;
}

bool AppTypeGraph::has_node(std::string_view type) const {
  return std::binary_search(nodes.begin(), nodes.end(), type);
}

std::vector<std::pair<std::string, Assoc>> AppTypeGraph::out(std::string_view type) const {
  std::vector<std::pair<std::string, Assoc>> result;
  auto it = assoc.lower_bound({std::string(type), std::string()});
  for (; it != assoc.end() && it->first.first == type; ++it) result.emplace_back(it->first.second, it->second);
  return result;
}

AppTypeGraph build_app_type_graph(const ApplicationModel& model) {
  AppTypeGraph g;
  for (const auto& t : model.types) {
    g.nodes.push_back(t.name);
    for (const auto& f : t.fields)
      if (model.is_persistent_type(f.targetType))
        g.assoc[{t.name, f.name}] = Assoc{f.targetType, f.cardinality};
  }
  std::sort(g.nodes.begin(), g.nodes.end());
  g.nodes.erase(std::unique(g.nodes.begin(), g.nodes.end()), g.nodes.end());
  return g;
}

// --------------------------------------------------------------------- paths

std::string format_path(const FieldPath& path, bool markers) {
  std::string out;
  for (const auto& step : path) {
    if (!out.empty()) out += '.';
    out += step.field;
    if (markers && step.cardinality == Cardinality::collection) out += "@collection";
  }
  return out;
}

FieldPath parse_path(std::string_view text) {
  FieldPath path;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t dot = text.find('.', start);
    std::string_view seg = text.substr(start, dot == std::string_view::npos ? text.npos : dot - start);
    PathStep step;
    constexpr std::string_view kMarker = "@collection";
    if (seg.ends_with(kMarker)) {
      seg.remove_suffix(kMarker.size());
      step.cardinality = Cardinality::collection;
    }
    if (seg.empty() || seg.find('@') != std::string_view::npos)
      throw HintError("malformed hint path '" + std::string(text) + "'");
    step.field = std::string(seg);
    path.push_back(std::move(step));
    if (dot == std::string_view::npos) break;
    start = dot + 1;
  }
  return path;
}

// -------------------------------------------------------------- method graph

const std::vector<NodeId>& AugmentedTypeGraph::children(NodeId id) const {
  return adjacency.at(static_cast<std::size_t>(id));
}

NodeId AugmentedTypeGraph::child(NodeId parent, std::string_view field) const {
  for (NodeId c : children(parent))
    if (node(c).viaField && *node(c).viaField == field) return c;
  return kNoNode;
}

FieldPath AugmentedTypeGraph::path_of(NodeId id) const {
  FieldPath path;
  for (NodeId n = id; node(n).viaField; n = node(n).parent)
    path.push_back({*node(n).viaField, node(n).cardinality});
  std::reverse(path.begin(), path.end());
  return path;
}

NodeId AugmentedTypeGraph::root_of(NodeId id) const {
  NodeId n = id;
  while (node(n).parent != kNoNode) n = node(n).parent;
  return n;
}

std::size_t AugmentedTypeGraph::navigation_count() const {
  return static_cast<std::size_t>(
      std::count_if(nodes.begin(), nodes.end(), [](const NavNode& n) { return n.viaField.has_value(); }));
}

std::set<std::string> AugmentedTypeGraph::distinct_types() const {
  std::set<std::string> out;
  for (const auto& n : nodes)
    if (n.viaField || n.id == root) out.insert(n.typeName);
  return out;
}

bool AugmentedTypeGraph::has_branch_dependent() const {
  return std::any_of(nodes.begin(), nodes.end(), [](const NavNode& n) { return n.branchDependent; });
}

namespace {

// Condition under which a navigation happens: a conjunction of branch arms.
// Keys starting with '!' are markers that can never be covered.
struct Cond {
  std::string key;
  std::string arm;
  friend auto operator<=>(const Cond&, const Cond&) = default;
  friend bool operator==(const Cond&, const Cond&) = default;
};
using Context = std::vector<Cond>;

const std::string kCalleeMarker = "!callee";
const std::string kExitMarker = "!exit";
const std::string kImplicitArm = "\x01implicit";

struct VarInfo {
  std::string type;
  bool collection = false;  // holds a collection field, elements not yet loaded
  std::vector<NodeId> parents;
  std::string field;
  std::vector<NodeId> nodes;
};

class MethodGraphBuilder {
 public:
  MethodGraphBuilder(const ApplicationModel& model, const AppTypeGraph& g, const MethodRef& ref,
                     GraphCache* cache)
      : model_(model), g_(g), ref_(ref), cache_(cache) {}

  AugmentedTypeGraph build() {
    const MethodDecl* method = model_.find_method(ref_);
    if (!method) throw AnalysisError("unknown method '" + ref_.str() + "'");
    method_ = method;
    ag_.methodRef = ref_;

    ag_.root = new_root(ref_.owner, std::string(kSelfVar), std::nullopt);
    vars_[std::string(kSelfVar)] = VarInfo{ref_.owner, false, {}, {}, {ag_.root}};
    for (std::size_t i = 0; i < method->params.size(); ++i) {
      const auto& p = method->params[i];
      VarInfo info{p.type, false, {}, {}, {}};
      NodeId id = kNoNode;
      if (model_.is_declared_type(p.type)) {
        id = new_root(p.type, param_var(i), static_cast<int>(i));
        info.nodes.push_back(id);
      }
      ag_.paramRoots.push_back(id);
      vars_[param_var(i)] = std::move(info);
    }

    for (const auto& in : method->instructions) {
      if (in.kind == InstrKind::conditionalbranch && !in.params.branchId.empty() && !in.params.arms.empty())
        declaredArms_[in.params.branchId] = in.params.arms;
      if (in.kind == InstrKind::return_ || in.kind == InstrKind::break_ || in.kind == InstrKind::continue_)
        for (const auto& f : in.scopeChain)
          if (f.kind == ScopeKind::loop) exitingLoops_.insert(f.id);
    }
    for (const auto& in : method->instructions) step(in);
    finish();
    return std::move(ag_);
  }

 private:
  [[noreturn]] void fail(const IrInstruction& in, const std::string& what) const {
    throw AnalysisError(ref_.str() + "@" + std::to_string(in.ii) + ": " + what);
  }

  NodeId new_root(const std::string& type, std::string var, std::optional<int> param) {
    NavNode n;
    n.id = static_cast<NodeId>(ag_.nodes.size());
    n.varId = std::move(var);
    n.typeName = type;
    n.paramIndex = param;
    ag_.nodes.push_back(std::move(n));
    kids_.emplace_back();
    contexts_.emplace_back();
    unconditional_.push_back(true);
    return ag_.nodes.back().id;
  }

  NodeId child(NodeId parent, const std::string& field, Cardinality card, const std::string& type,
               const std::string& var, const Context& ctx) {
    NodeId found = kNoNode;
    for (const auto& [f, id] : kids_[static_cast<std::size_t>(parent)])
      if (f == field) found = id;
    if (found == kNoNode) {
      NavNode n;
      n.id = static_cast<NodeId>(ag_.nodes.size());
      n.parent = parent;
      n.varId = var;
      n.viaField = field;
      n.typeName = type;
      n.cardinality = card;
      found = n.id;
      ag_.nodes.push_back(std::move(n));
      kids_[static_cast<std::size_t>(parent)].emplace_back(field, found);
      kids_.emplace_back();
      contexts_.emplace_back();
      unconditional_.push_back(false);
    }
    auto idx = static_cast<std::size_t>(found);
    if (!unconditional_[idx]) {
      if (ctx.empty()) {
        unconditional_[idx] = true;
        contexts_[idx].clear();
      } else if (std::find(contexts_[idx].begin(), contexts_[idx].end(), ctx) == contexts_[idx].end()) {
        contexts_[idx].push_back(ctx);
      }
    }
    return found;
  }

  Context context_of(const IrInstruction& in) {
    Context ctx;
    for (const auto& f : in.scopeChain) {
      if (f.kind == ScopeKind::branch) {
        ctx.push_back({f.id, f.arm.value_or("")});
        observedArms_[f.id].insert(f.arm.value_or(""));
      } else if (exitingLoops_.contains(f.id)) {
        ctx.push_back({kExitMarker, f.id});
      }
    }
    return ctx;
  }

  const VarInfo& use(const IrInstruction& in, std::size_t index) const {
    if (index >= in.usedVars.size()) fail(in, std::string(to_string(in.kind)) + " is missing an operand");
    auto it = vars_.find(in.usedVars[index]);
    if (it == vars_.end() || it->second.type.empty())
      fail(in, "variable '" + in.usedVars[index] + "' has no known static type");
    return it->second;
  }

  void define(const IrInstruction& in, VarInfo info) {
    if (in.defVar) vars_[*in.defVar] = std::move(info);
  }

  void step(const IrInstruction& in) {
    switch (in.kind) {
      case InstrKind::getfield: {
        const VarInfo& base = use(in, 0);
        if (base.collection) fail(in, "getfield on a collection value");
        if (is_primitive(base.type)) fail(in, "getfield on primitive variable '" + in.usedVars[0] + "'");
        const TypeDecl* owner = model_.find_type(in.params.ownerType);
        const FieldDecl* field = owner ? owner->find_field(in.params.fieldName) : nullptr;
        if (!field) fail(in, "unknown field '" + in.params.ownerType + "." + in.params.fieldName + "'");
        VarInfo out{field->targetType, false, {}, {}, {}};
        const Assoc* a = g_.find(in.params.ownerType, field->name);
        if (field->cardinality == Cardinality::collection) {
          out.collection = true;
          out.field = field->name;
          if (a) out.parents = base.nodes;
        } else if (a) {
          Context ctx = context_of(in);
          std::vector<NodeId> parents = base.nodes;
          for (NodeId p : parents)
            out.nodes.push_back(child(p, field->name, Cardinality::single, a->targetType,
                                      in.defVar.value_or(""), ctx));
        }
        define(in, std::move(out));
        break;
      }
      case InstrKind::putfield: {
        const VarInfo& base = use(in, 0);
        if (base.collection || is_primitive(base.type)) fail(in, "putfield needs an object operand");
        break;
      }
      case InstrKind::arrayload: {
        const VarInfo& coll = use(in, 0);
        if (!coll.collection) fail(in, "arrayload on non-collection variable '" + in.usedVars[0] + "'");
        VarInfo out{coll.type, false, {}, {}, {}};
        Context ctx = context_of(in);
        std::vector<NodeId> parents = coll.parents;
        const std::string field = coll.field;
        for (NodeId p : parents)
          out.nodes.push_back(child(p, field, Cardinality::collection, out.type, in.defVar.value_or(""), ctx));
        define(in, std::move(out));
        break;
      }
      case InstrKind::invokemethod:
        invoke(in);
        break;
      case InstrKind::return_:
        if (!in.usedVars.empty()) {
          auto it = vars_.find(in.usedVars[0]);
          if (it != vars_.end())
            for (NodeId n : it->second.nodes) ag_.nodes[static_cast<std::size_t>(n)].isReturnNode = true;
        }
        break;
      default:
        // noop and control transfer: a definition here carries no static type
        if (in.defVar) vars_[*in.defVar] = VarInfo{};
        break;
    }
  }

  void invoke(const IrInstruction& in) {
    const VarInfo& receiver = use(in, 0);
    if (receiver.collection || is_primitive(receiver.type))
      fail(in, "invocation receiver '" + in.usedVars[0] + "' is not an object");
    MethodRef callee{in.params.ownerType, in.params.methodName};
    const MethodDecl* decl = model_.find_method(callee);
    if (!decl) fail(in, "unknown method '" + callee.str() + "'");
    VarInfo result{decl->returnType, false, {}, {}, {}};

    const AugmentedTypeGraph* sub = nullptr;
    if (cache_ != nullptr) {
      if (model_.is_overridden(callee)) {
        ag_.excludedOverride = true;
      } else if (cache_->in_progress(callee)) {
        sub = &cache_->intra(callee);
        ag_.truncated = true;
      } else {
        sub = &cache_->augmented(callee);
        if (sub->truncated) ag_.truncated = true;
        if (sub->excludedOverride) ag_.excludedOverride = true;
      }
    }
    ag_.callSites.push_back({in.ii, callee, receiver.nodes, sub != nullptr});
    if (sub != nullptr) {
      Context ctx = context_of(in);
      Context markedCtx = ctx;
      markedCtx.push_back({kCalleeMarker, ""});
      std::vector<std::vector<NodeId>> mapped(sub->nodes.size());
      mapped[static_cast<std::size_t>(sub->root)] = receiver.nodes;
      for (std::size_t i = 0; i < sub->paramRoots.size(); ++i) {
        if (sub->paramRoots[i] == kNoNode || i + 1 >= in.usedVars.size()) continue;
        auto it = vars_.find(in.usedVars[i + 1]);
        if (it == vars_.end()) fail(in, "argument '" + in.usedVars[i + 1] + "' is undefined");
        mapped[static_cast<std::size_t>(sub->paramRoots[i])] = it->second.nodes;
      }
      for (const auto& n : sub->nodes) {
        if (!n.viaField) continue;
        auto& targets = mapped[static_cast<std::size_t>(n.id)];
        for (NodeId p : mapped[static_cast<std::size_t>(n.parent)])
          targets.push_back(child(p, *n.viaField, n.cardinality, n.typeName, n.varId,
                                  n.branchDependent ? markedCtx : ctx));
      }
      for (const auto& n : sub->nodes)
        if (n.isReturnNode)
          for (NodeId m : mapped[static_cast<std::size_t>(n.id)])
            if (std::find(result.nodes.begin(), result.nodes.end(), m) == result.nodes.end())
              result.nodes.push_back(m);
    }
    define(in, std::move(result));
  }

  std::vector<std::string> arms_of(const std::string& key) const {
    if (auto it = declaredArms_.find(key); it != declaredArms_.end()) return it->second;
    std::vector<std::string> arms;
    if (auto it = observedArms_.find(key); it != observedArms_.end()) arms.assign(it->second.begin(), it->second.end());
    arms.push_back(kImplicitArm);
    return arms;
  }

  // True when the disjunction of the contexts holds on every execution.
  bool covered(const std::vector<Context>& ctxs, std::size_t depth) const {
    for (const auto& c : ctxs)
      if (c.size() <= depth) return true;
    std::set<std::string> keys;
    for (const auto& c : ctxs)
      if (c[depth].key[0] != '!') keys.insert(c[depth].key);
    for (const auto& key : keys) {
      bool all = true;
      for (const auto& arm : arms_of(key)) {
        std::vector<Context> sub;
        for (const auto& c : ctxs)
          if (c[depth].key == key && c[depth].arm == arm) sub.push_back(c);
        if (sub.empty() || !covered(sub, depth + 1)) {
          all = false;
          break;
        }
      }
      if (all) return true;
    }
    return false;
  }

  void finish() {
    const std::size_t n = ag_.nodes.size();
    std::vector<bool> bdFull(n, false);
    std::vector<bool> bdOwn(n, false);
    for (std::size_t i = 0; i < n; ++i) {
      auto& node = ag_.nodes[i];
      if (!unconditional_[i]) {
        bdFull[i] = !covered(contexts_[i], 0);
        std::vector<Context> own;
        for (const auto& c : contexts_[i]) {
          Context stripped;
          for (const auto& cond : c)
            if (cond.key != kCalleeMarker) stripped.push_back(cond);
          own.push_back(std::move(stripped));
        }
        bdOwn[i] = !covered(own, 0);
      }
      if (node.parent != kNoNode) {
        auto p = static_cast<std::size_t>(node.parent);
        bdFull[i] = bdFull[i] || bdFull[p];
        bdOwn[i] = bdOwn[i] || bdOwn[p];
      }
      node.branchDependent = bdFull[i];
      node.inheritedBranchDependent = bdFull[i] && !bdOwn[i];
    }
    ag_.adjacency.assign(n, {});
    for (std::size_t i = 0; i < n; ++i)
      for (const auto& kid : kids_[i]) {
        ag_.adjacency[i].push_back(kid.second);
        ag_.edges.emplace_back(static_cast<NodeId>(i), kid.second);
      }
    std::sort(ag_.edges.begin(), ag_.edges.end());
  }

  const ApplicationModel& model_;
  const AppTypeGraph& g_;
  MethodRef ref_;
  GraphCache* cache_;
  const MethodDecl* method_ = nullptr;
  AugmentedTypeGraph ag_;
  std::unordered_map<std::string, VarInfo> vars_;
  std::vector<std::vector<std::pair<std::string, NodeId>>> kids_;
  std::vector<std::vector<Context>> contexts_;
  std::vector<bool> unconditional_;
  std::unordered_map<std::string, std::vector<std::string>> declaredArms_;
  std::unordered_map<std::string, std::set<std::string>> observedArms_;
  std::unordered_set<std::string> exitingLoops_;
};

}  // namespace

AugmentedTypeGraph build_method_graph(const ApplicationModel& model, const MethodRef& ref,
                                      const AppTypeGraph& g) {
  return MethodGraphBuilder(model, g, ref, nullptr).build();
}

// ------------------------------------------------------------------ the cache

GraphCache::GraphCache(const ApplicationModel& model)
    : model_(model), g_(build_app_type_graph(model)) {}

bool GraphCache::in_progress(const MethodRef& ref) const { return inProgress_.contains(ref); }

const AugmentedTypeGraph& GraphCache::intra(const MethodRef& ref) {
  if (auto it = intra_.find(ref); it != intra_.end()) return it->second;
  ++intraCount_[ref];
  return intra_.emplace(ref, build_method_graph(model_, ref, g_)).first->second;
}

const AugmentedTypeGraph& GraphCache::augmented(const MethodRef& ref) {
  if (auto it = augmentedIndex_.find(ref); it != augmentedIndex_.end()) return *it->second;
  if (inProgress_.contains(ref)) return intra(ref);
  inProgress_.insert(ref);
  struct Guard {
    std::unordered_set<MethodRef, MethodRefHash>& set;
    const MethodRef& ref;
    ~Guard() { set.erase(ref); }
  } guard{inProgress_, ref};
  ++augmentedCount_[ref];
  AugmentedTypeGraph ag = MethodGraphBuilder(model_, g_, ref, this).build();
  const AugmentedTypeGraph& stored = augmented_.emplace(ref, std::move(ag)).first->second;
  augmentedIndex_.emplace(ref, &stored);
  return stored;
}

void GraphCache::build_all() {
  for (const auto& ref : model_.all_methods()) augmented(ref);
}

int GraphCache::intra_builds(const MethodRef& ref) const {
  auto it = intraCount_.find(ref);
  return it == intraCount_.end() ? 0 : it->second;
}

int GraphCache::augmented_builds(const MethodRef& ref) const {
  auto it = augmentedCount_.find(ref);
  return it == augmentedCount_.end() ? 0 : it->second;
}

AugmentedTypeGraph build_augmented_graph(const MethodRef& ref, const ApplicationModel& model,
                                         const AppTypeGraph& g, GraphCache& cache) {
  if (&cache.model() != &model) return GraphCache(model).augmented(ref);
  (void)g;
  return cache.augmented(ref);
}

// ---------------------------------------------------------------------- dumps

namespace {

std::string dot_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

}  // namespace

std::string type_graph_to_dot(const AppTypeGraph& g) {
  std::ostringstream os;
  os << "digraph G_T {\n";
  for (const auto& n : g.nodes) os << "  \"" << dot_escape(n) << "\";\n";
  for (const auto& [key, a] : g.assoc) {
    os << "  \"" << dot_escape(key.first) << "\" -> \"" << dot_escape(a.targetType) << "\" [label=\""
       << dot_escape(key.second) << (a.cardinality == Cardinality::collection ? " *" : "") << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

std::string type_graph_to_json(const AppTypeGraph& g) {
  nlohmann::ordered_json j;
  j["nodes"] = g.nodes;
  nlohmann::ordered_json assoc = nlohmann::ordered_json::array();
  for (const auto& [key, a] : g.assoc)
    assoc.push_back({{"source", key.first},
                     {"field", key.second},
                     {"target", a.targetType},
                     {"cardinality", std::string(to_string(a.cardinality))}});
  j["assoc"] = std::move(assoc);
  return j.dump(2) + "\n";
}

std::string method_graph_to_dot(const AugmentedTypeGraph& ag) {
  std::ostringstream os;
  os << "digraph \"" << dot_escape(ag.methodRef.str()) << "\" {\n";
  for (const auto& n : ag.nodes) {
    os << "  n" << n.id << " [label=\"" << dot_escape(n.typeName);
    if (n.paramIndex) os << " (p" << *n.paramIndex << ")";
    os << "\"";
    if (n.branchDependent) os << ", color=orange";
    if (n.isReturnNode) os << ", shape=box";
    os << "];\n";
  }
  for (const auto& [from, to] : ag.edges) {
    const auto& n = ag.node(to);
    os << "  n" << from << " -> n" << to << " [label=\"" << dot_escape(n.viaField.value_or(""))
       << (n.cardinality == Cardinality::collection ? " *" : "") << "\"";
    if (n.branchDependent) os << ", style=dashed";
    os << "];\n";
  }
  os << "}\n";
  return os.str();
}

std::string method_graph_to_json(const AugmentedTypeGraph& ag) {
  nlohmann::ordered_json j;
  j["method"] = ag.methodRef.str();
  j["root"] = ag.root;
  nlohmann::ordered_json nodes = nlohmann::ordered_json::array();
  for (const auto& n : ag.nodes) {
    nlohmann::ordered_json jn;
    jn["id"] = n.id;
    jn["var"] = n.varId;
    jn["field"] = n.viaField ? nlohmann::ordered_json(*n.viaField) : nlohmann::ordered_json(nullptr);
    jn["type"] = n.typeName;
    jn["cardinality"] = std::string(to_string(n.cardinality));
    jn["branchDependent"] = n.branchDependent;
    jn["isReturnNode"] = n.isReturnNode;
    jn["paramIndex"] = n.paramIndex ? nlohmann::ordered_json(*n.paramIndex) : nlohmann::ordered_json(nullptr);
    nodes.push_back(std::move(jn));
  }
  j["nodes"] = std::move(nodes);
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (const auto& [from, to] : ag.edges) edges.push_back({from, to});
  j["edges"] = std::move(edges);
  j["truncated"] = ag.truncated;
  j["excludedOverride"] = ag.excludedOverride;
  return j.dump(2) + "\n";
}

}  // namespace caprelab
