#include <algorithm>
#include <charconv>
#include <fstream>
#include <iterator>
#include <random>

#include "caprelab/model_io.hpp"
#include "caprelab/simulator.hpp"
#include "json.hpp"

namespace caprelab {

using nlohmann::json;
using nlohmann::ordered_json;

// ------------------------------------------------------------------- dataset

namespace {

Oid require_oid(const json& j, const std::string& where) {
  if (!j.is_number_integer()) throw DatasetError(where + ": object ids must be integers");
  return j.get<Oid>();
}

ObjectRecord record_from_json(const json& j, std::size_t index) {
  const std::string where = "object #" + std::to_string(index);
  if (!j.is_object()) throw DatasetError(where + ": records must be objects");
  ObjectRecord r;
  auto oid = j.find("oid");
  if (oid == j.end()) throw DatasetError(where + ": missing \"oid\"");
  r.oid = require_oid(*oid, where);
  auto type = j.find("type");
  if (type == j.end() || !type->is_string()) throw DatasetError(where + ": missing \"type\"");
  r.typeName = type->get<std::string>();
  if (auto s = j.find("singles"); s != j.end()) {
    if (!s->is_object()) throw DatasetError(where + ": \"singles\" must be an object");
    for (const auto& [k, v] : s->items())
      r.singles[k] = v.is_null() ? std::nullopt : std::optional<Oid>(require_oid(v, where));
  }
  if (auto c = j.find("collections"); c != j.end()) {
    if (!c->is_object()) throw DatasetError(where + ": \"collections\" must be an object");
    for (const auto& [k, v] : c->items()) {
      if (!v.is_array()) throw DatasetError(where + ": collection '" + k + "' must be an array");
      auto& list = r.collections[k];
      for (const auto& e : v) list.push_back(require_oid(e, where));
    }
  }
  if (auto p = j.find("prims"); p != j.end()) {
    if (!p->is_object()) throw DatasetError(where + ": \"prims\" must be an object");
    for (const auto& [k, v] : p->items()) r.prims[k] = v.dump();
  }
  if (auto n = j.find("nodeId"); n != j.end() && !n->is_null()) {
    if (!n->is_number_integer()) throw DatasetError(where + ": \"nodeId\" must be an integer");
    r.nodeId = n->get<int>();
  }
  return r;
}

}  // namespace

Dataset dataset_from_json_text(std::string_view text) {
  json doc = parse_json_text(text);
  const json* arr = &doc;
  if (doc.is_object() && doc.contains("objects")) arr = &doc["objects"];
  if (!arr->is_array()) throw DatasetError("dataset must be a JSON array of object records");
  Dataset ds;
  ds.objects.reserve(arr->size());
  std::size_t i = 0;
  for (const auto& j : *arr) ds.objects.push_back(record_from_json(j, i++));
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open dataset '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return dataset_from_json_text(text);
}

std::string dataset_to_json(const Dataset& ds) {
  std::string out = "[\n";
  bool first = true;
  for (const auto& r : ds.objects) {
    ordered_json j;
    j["oid"] = r.oid;
    j["type"] = r.typeName;
    if (!r.singles.empty()) {
      ordered_json s = ordered_json::object();
      for (const auto& [k, v] : r.singles) s[k] = v ? ordered_json(*v) : ordered_json(nullptr);
      j["singles"] = std::move(s);
    }
    if (!r.collections.empty()) {
      ordered_json c = ordered_json::object();
      for (const auto& [k, v] : r.collections) c[k] = v;
      j["collections"] = std::move(c);
    }
    if (!r.prims.empty()) {
      ordered_json p = ordered_json::object();
      for (const auto& [k, v] : r.prims) p[k] = ordered_json::parse(v);
      j["prims"] = std::move(p);
    }
    if (r.nodeId) j["nodeId"] = *r.nodeId;
    if (!first) out += ",\n";
    first = false;
    out += "  " + j.dump();
  }
  out += "\n]\n";
  return out;
}

// --------------------------------------------------------------------- trace

WorkloadTrace trace_from_json_text(std::string_view text) {
  json doc = parse_json_text(text);
  if (!doc.is_object()) throw ParseError("trace must be a JSON object");
  WorkloadTrace t;
  if (auto n = doc.find("name"); n != doc.end() && n->is_string()) t.name = n->get<std::string>();
  auto steps = doc.find("steps");
  if (steps == doc.end() || !steps->is_array()) throw ParseError("trace needs a \"steps\" array");
  for (const auto& s : *steps) {
    if (!s.is_object() || !s.contains("method") || !s.contains("root") || !s["method"].is_string() ||
        !s["root"].is_number_integer())
      throw ParseError("trace steps need \"method\" (string) and \"root\" (integer)");
    t.steps.push_back({MethodRef::parse(s["method"].get<std::string>()), s["root"].get<Oid>()});
  }
  if (auto b = doc.find("branchOracle"); b != doc.end() && !b->is_null()) {
    if (!b->is_object()) throw ParseError("\"branchOracle\" must be an object");
    const std::string mode = b->value("mode", std::string("probability"));
    auto& o = t.branchOracle;
    if (mode == "probability") {
      o.mode = BranchOracleSpec::Mode::probability;
      o.p = b->value("p", 0.5);
      if (o.p < 0.0 || o.p > 1.0) throw ParseError("branch probability must lie in [0, 1]");
    } else if (mode == "fixed") {
      o.mode = BranchOracleSpec::Mode::fixed;
      auto arm = b->find("arm");
      if (arm == b->end()) throw ParseError("fixed branch oracle needs \"arm\"");
      o.fixedArm = arm->is_string() ? arm->get<std::string>() : arm->dump();
    } else if (mode == "scripted") {
      o.mode = BranchOracleSpec::Mode::scripted;
      auto sc = b->find("steps");
      if (sc == b->end() || !sc->is_array()) throw ParseError("scripted branch oracle needs \"steps\"");
      for (const auto& per : *sc) {
        std::vector<std::string> arms;
        if (!per.is_array()) throw ParseError("scripted outcomes must be arrays");
        for (const auto& a : per) arms.push_back(a.is_string() ? a.get<std::string>() : a.dump());
        o.script.push_back(std::move(arms));
      }
    } else {
      throw ParseError("unknown branch oracle mode '" + mode + "'");
    }
  }
  return t;
}

WorkloadTrace load_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open trace '" + path.string() + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return trace_from_json_text(text);
}

std::string trace_to_json(const WorkloadTrace& trace) {
  ordered_json j;
  if (!trace.name.empty()) j["name"] = trace.name;
  ordered_json steps = ordered_json::array();
  for (const auto& s : trace.steps) steps.push_back({{"method", s.method.str()}, {"root", s.root}});
  j["steps"] = std::move(steps);
  ordered_json b;
  const auto& o = trace.branchOracle;
  switch (o.mode) {
    case BranchOracleSpec::Mode::probability:
      b["mode"] = "probability";
      b["p"] = o.p;
      break;
    case BranchOracleSpec::Mode::fixed:
      b["mode"] = "fixed";
      b["arm"] = o.fixedArm;
      break;
    case BranchOracleSpec::Mode::scripted:
      b["mode"] = "scripted";
      b["steps"] = o.script;
      break;
  }
  j["branchOracle"] = std::move(b);
  return j.dump(2) + "\n";
}

// -------------------------------------------------------------------- policy

std::string PolicySpec::name() const {
  switch (kind) {
    case Kind::none:
      return "none";
    case Kind::capre:
      return "capre";
    case Kind::rop:
      return "rop:" + std::to_string(depth);
  }
  return "?";
}

PolicySpec PolicySpec::parse(std::string_view text) {
  if (text == "none") return none();
  if (text == "capre") return capre();
  if (text.starts_with("rop:")) {
    int d = 0;
    auto digits = text.substr(4);
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), d);
    if (ec == std::errc() && ptr == digits.data() + digits.size() && d >= 1) return rop(d);
  }
  throw Error("invalid policy '" + std::string(text) + "' (expected none, capre or rop:<depth>)");
}

// --------------------------------------------------------------------- store

namespace {

int find_index(const std::vector<std::string>& names, std::string_view field) {
  auto it = std::find(names.begin(), names.end(), field);
  return it == names.end() ? -1 : static_cast<int>(it - names.begin());
}

}  // namespace

int TypeLayout::single_index(std::string_view field) const { return find_index(singles, field); }
int TypeLayout::collection_index(std::string_view field) const { return find_index(collections, field); }
int TypeLayout::prim_index(std::string_view field) const { return find_index(prims, field); }

int StoreState::index_of(Oid oid) const {
  auto it = byOid.find(oid);
  return it == byOid.end() ? -1 : it->second;
}

std::vector<std::size_t> StoreState::objects_per_node() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(numNodes), 0);
  for (const auto& o : objects) ++counts[static_cast<std::size_t>(o.node)];
  return counts;
}

StoreState build_store(const Dataset& dataset, const ApplicationModel& model, const StoreConfig& cfg) {
  if (cfg.numNodes < 1) throw PlacementError("numNodes must be at least 1");
  StoreState st;
  st.numNodes = cfg.numNodes;
  for (const auto& t : model.types) {
    TypeLayout l;
    l.name = t.name;
    l.persistent = t.persistent;
    for (const auto& f : t.fields) {
      if (f.cardinality == Cardinality::collection)
        l.collections.push_back(f.name);
      else if (model.is_declared_type(f.targetType))
        l.singles.push_back(f.name);
      else
        l.prims.push_back(f.name);
    }
    st.typeIndex.emplace(t.name, static_cast<int>(st.layouts.size()));
    st.layouts.push_back(std::move(l));
  }

  st.objects.resize(dataset.objects.size());
  for (std::size_t i = 0; i < dataset.objects.size(); ++i) {
    const auto& r = dataset.objects[i];
    if (!st.byOid.emplace(r.oid, static_cast<int>(i)).second)
      throw DatasetError("duplicate object id " + std::to_string(r.oid));
  }
  for (std::size_t i = 0; i < dataset.objects.size(); ++i) {
    const auto& r = dataset.objects[i];
    const std::string where = "object " + std::to_string(r.oid);
    auto ti = st.typeIndex.find(r.typeName);
    if (ti == st.typeIndex.end()) throw DatasetError(where + ": unknown type '" + r.typeName + "'");
    const TypeLayout& l = st.layouts[static_cast<std::size_t>(ti->second)];
    StoredObject& o = st.objects[i];
    o.oid = r.oid;
    o.type = ti->second;
    o.node = -1;
    o.singles.assign(l.singles.size(), -1);
    o.collections.assign(l.collections.size(), {});
    o.prims.assign(l.prims.size(), "null");
    auto resolve = [&](Oid target) {
      int idx = st.index_of(target);
      if (idx < 0) throw DatasetError(where + ": dangling reference to " + std::to_string(target));
      return idx;
    };
    for (const auto& [f, v] : r.singles) {
      int k = l.single_index(f);
      if (k < 0) throw DatasetError(where + ": '" + f + "' is not a reference field of " + l.name);
      if (v) o.singles[static_cast<std::size_t>(k)] = resolve(*v);
    }
    for (const auto& [f, v] : r.collections) {
      int k = l.collection_index(f);
      if (k < 0) throw DatasetError(where + ": '" + f + "' is not a collection field of " + l.name);
      auto& list = o.collections[static_cast<std::size_t>(k)];
      list.reserve(v.size());
      for (Oid e : v) list.push_back(resolve(e));
    }
    for (const auto& [f, v] : r.prims) {
      int k = l.prim_index(f);
      if (k < 0) throw DatasetError(where + ": '" + f + "' is not a primitive field of " + l.name);
      o.prims[static_cast<std::size_t>(k)] = v;
    }
    if (r.nodeId) {
      if (*r.nodeId < 0 || *r.nodeId >= cfg.numNodes)
        throw PlacementError(where + ": nodeId " + std::to_string(*r.nodeId) + " outside [0, " +
                             std::to_string(cfg.numNodes) + ")");
      o.node = *r.nodeId;
    }
  }

  std::mt19937_64 rng(cfg.rngSeed ^ 0x9e3779b97f4a7c15ULL);
  const auto n = static_cast<std::uint64_t>(cfg.numNodes);
  for (auto& o : st.objects) {
    for (const auto& list : o.collections) {
      if (list.empty()) continue;
      std::uint64_t next = rng() % n;
      for (int e : list) {
        auto& elem = st.objects[static_cast<std::size_t>(e)];
        if (elem.node >= 0) continue;
        elem.node = static_cast<int>(next);
        next = (next + 1) % n;
      }
    }
  }
  std::uint64_t counter = 0;
  for (auto& o : st.objects) {
    if (o.node >= 0) continue;
    o.node = static_cast<int>(counter % n);
    ++counter;
  }
  return st;
}

}  // namespace caprelab
