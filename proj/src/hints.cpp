#include "caprelab/hints.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <iterator>

#include "caprelab/model_io.hpp"
#include "json.hpp"

namespace caprelab {

namespace {

bool is_prefix(const FieldPath& a, const FieldPath& b) {
  return a.size() <= b.size() && std::equal(a.begin(), a.end(), b.begin());
}

FieldPath concat(const FieldPath& a, const FieldPath& b) {
  FieldPath out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace

void HintSet::add(const std::string& sourceType, FieldPath path) {
  if (path.empty()) return;
  for (const auto& h : hints)
    if (is_prefix(path, h.path)) return;
  std::erase_if(hints, [&](const Hint& h) { return is_prefix(h.path, path); });
  Hint h{sourceType, std::move(path)};
  hints.insert(std::upper_bound(hints.begin(), hints.end(), h), std::move(h));
}

bool HintSet::contains(const FieldPath& path) const {
  return std::any_of(hints.begin(), hints.end(), [&](const Hint& h) { return h.path == path; });
}

std::vector<std::string> HintSet::strings(bool markers) const {
  std::vector<std::string> out;
  for (const auto& h : hints) out.push_back(format_path(h.path, markers));
  return out;
}

std::set<FieldPath> prefix_closure(const HintSet& hs) {
  std::set<FieldPath> out;
  for (const auto& h : hs.hints)
    for (std::size_t n = 1; n <= h.path.size(); ++n) out.emplace(h.path.begin(), h.path.begin() + static_cast<long>(n));
  return out;
}

HintSet generate_hints(const AugmentedTypeGraph& ag) {
  HintSet hs;
  hs.methodRef = ag.methodRef;
  const std::string& source = ag.node(ag.root).typeName;
  std::function<void(NodeId)> walk = [&](NodeId id) {
    bool leaf = true;
    for (NodeId c : ag.children(id)) {
      if (ag.node(c).inheritedBranchDependent) continue;
      leaf = false;
      walk(c);
    }
    if (leaf && id != ag.root) hs.add(source, ag.path_of(id));
  };
  walk(ag.root);
  return hs;
}

CallGraph build_call_graph(GraphCache& cache, const std::set<MethodRef>& extraEntryPoints) {
  CallGraph cg;
  const auto& model = cache.model();
  cg.entryPoints.insert(model.entryPoints.begin(), model.entryPoints.end());
  cg.entryPoints.insert(extraEntryPoints.begin(), extraEntryPoints.end());
  for (const auto& ref : model.all_methods()) {
    const AugmentedTypeGraph& ag = cache.augmented(ref);
    for (const auto& site : ag.callSites) {
      cg.callers[site.callee].insert(ref);
      CallSite cs{ref, site.ii, std::nullopt};
      if (!site.receiverNodes.empty()) {
        std::vector<FieldPath> paths;
        bool rooted = true;
        for (NodeId n : site.receiverNodes) {
          if (ag.root_of(n) != ag.root) {
            rooted = false;
            break;
          }
          paths.push_back(ag.path_of(n));
        }
        if (rooted) cs.receiverPaths = std::move(paths);
      }
      cg.sites[site.callee].push_back(std::move(cs));
    }
  }
  return cg;
}

HintMap dedup_hints(const HintMap& all, const CallGraph& cg, DedupMode mode) {
  std::map<MethodRef, std::set<FieldPath>> closures;
  for (const auto& [ref, hs] : all) closures[ref] = prefix_closure(hs);

  // Is `path` (rooted at m's receiver) prefetched by every caller of m?
  std::function<bool(const MethodRef&, const FieldPath&, std::set<MethodRef>&)> covered =
      [&](const MethodRef& m, const FieldPath& path, std::set<MethodRef>& visiting) -> bool {
    if (cg.entryPoints.contains(m)) return false;
    auto sit = cg.sites.find(m);
    if (sit == cg.sites.end() || sit->second.empty()) return false;
    if (!visiting.insert(m).second) return false;
    bool all_covered = true;
    for (const auto& site : sit->second) {
      if (!site.receiverPaths) {
        all_covered = false;
        break;
      }
      auto cit = closures.find(site.caller);
      for (const auto& r : *site.receiverPaths) {
        FieldPath rerooted = concat(r, path);
        bool ok = cit != closures.end() && cit->second.contains(rerooted);
        if (!ok && mode == DedupMode::transitive) ok = covered(site.caller, rerooted, visiting);
        if (!ok) {
          all_covered = false;
          break;
        }
      }
      if (!all_covered) break;
    }
    visiting.erase(m);
    return all_covered;
  };

  HintMap out;
  for (const auto& [ref, hs] : all) {
    HintSet kept;
    kept.methodRef = hs.methodRef;
    for (const auto& h : hs.hints) {
      std::set<MethodRef> visiting;
      if (!covered(ref, h.path, visiting)) kept.hints.push_back(h);
    }
    out.emplace(ref, std::move(kept));
  }
  return out;
}

HintSet rop_hints(const std::string& root, int depth, const AppTypeGraph& g) {
  if (!g.has_node(root)) throw UnknownType(root);
  if (depth < 1) throw HintError("fetch depth must be at least 1");
  HintSet hs;
  hs.methodRef = {root, "<rop:" + std::to_string(depth) + ">"};
  std::set<std::string> onPath{root};
  FieldPath path;
  std::function<void(const std::string&)> walk = [&](const std::string& type) {
    bool extended = false;
    if (static_cast<int>(path.size()) < depth) {
      for (const auto& [field, a] : g.out(type)) {
        if (a.cardinality != Cardinality::single) continue;
        extended = true;
        path.push_back({field, Cardinality::single});
        if (onPath.contains(a.targetType)) {
          hs.add(root, path);
        } else {
          onPath.insert(a.targetType);
          walk(a.targetType);
          onPath.erase(a.targetType);
        }
        path.pop_back();
      }
    }
    if (!extended && !path.empty()) hs.add(root, path);
  };
  walk(root);
  return hs;
}

HintMap generate_all_hints(GraphCache& cache) {
  cache.build_all();
  HintMap out;
  for (const auto& ref : cache.model().all_methods()) out.emplace(ref, generate_hints(cache.augmented(ref)));
  return out;
}

HintMap analyze_hints(const ApplicationModel& model, const AnalysisOptions& options) {
  GraphCache cache(model);
  HintMap all = generate_all_hints(cache);
  if (!options.dedup) return all;
  return dedup_hints(all, build_call_graph(cache, options.extraEntryPoints), options.mode);
}

std::string hints_to_json(const HintMap& hints) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [ref, hs] : hints) j[ref.str()] = hs.strings(true);
  return j.dump(2) + "\n";
}

void check_hint_paths(const HintMap& hints, const ApplicationModel& model, const AppTypeGraph& g) {
  for (const auto& [ref, hs] : hints) {
    if (!model.find_method(ref)) throw HintError("hint file names unknown method '" + ref.str() + "'");
    for (const auto& h : hs.hints) {
      std::string type = ref.owner;
      for (const auto& step : h.path) {
        const Assoc* a = g.find(type, step.field);
        if (!a || a->cardinality != step.cardinality)
          throw HintError("hint '" + format_path(h.path) + "' of " + ref.str() + " is not a walk from " +
                          ref.owner + " (at '" + step.field + "')");
        type = a->targetType;
      }
    }
  }
}

HintMap hints_from_json_text(std::string_view text, const ApplicationModel& model) {
  nlohmann::json doc;
  try {
    doc = parse_json_text(text);
  } catch (const ParseError& e) {
    throw HintError(std::string("hint file: ") + e.what());
  }
  if (!doc.is_object()) throw HintError("hint file must hold a JSON object");
  HintMap out;
  for (const auto& [key, value] : doc.items()) {
    MethodRef ref;
    try {
      ref = MethodRef::parse(key);
    } catch (const ParseError& e) {
      throw HintError(e.what());
    }
    if (!value.is_array()) throw HintError("hints of '" + key + "' must be an array");
    HintSet hs;
    hs.methodRef = ref;
    for (const auto& p : value) {
      if (!p.is_string()) throw HintError("hints of '" + key + "' must be strings");
      hs.add(ref.owner, parse_path(p.get<std::string>()));
    }
    out[ref] = std::move(hs);
  }
  check_hint_paths(out, model, build_app_type_graph(model));
  return out;
}

HintMap load_hints(const std::filesystem::path& path, const ApplicationModel& model) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw HintError("cannot open hint file '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return hints_from_json_text(text, model);
}

}  // namespace caprelab
