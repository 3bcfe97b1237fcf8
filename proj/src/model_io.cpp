#include "caprelab/model_io.hpp"

#include <fstream>
#include <sstream>

namespace caprelab {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::pair<int, int> line_column(std::string_view text, std::size_t byte) {
  int line = 1;
  int column = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      column = 1;
    } else {
      ++column;
    }
  }
  return {line, column};
}

const json& require(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing \"" + key + "\"");
  return *it;
}

std::string require_string(const json& obj, const char* key, const std::string& where) {
  const json& v = require(obj, key, where);
  if (!v.is_string()) throw ParseError(where + ": \"" + key + "\" must be a string");
  return v.get<std::string>();
}

std::string opt_string(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw ParseError(where + ": \"" + key + "\" must be a string");
  return it->get<std::string>();
}

const json& require_array(const json& obj, const char* key, const std::string& where,
                          bool optional = false) {
  static const json empty = json::array();
  auto it = obj.find(key);
  if (it == obj.end()) {
    if (optional) return empty;
    throw ParseError(where + ": missing \"" + key + "\"");
  }
  if (!it->is_array()) throw ParseError(where + ": \"" + key + "\" must be an array");
  return *it;
}

Cardinality parse_cardinality(const std::string& s, const std::string& where) {
  if (s.empty() || s == "single") return Cardinality::single;
  if (s == "collection") return Cardinality::collection;
  throw ParseError(where + ": unknown cardinality '" + s + "'");
}

ScopeFrame parse_frame(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": scope frames must be objects");
  ScopeFrame f;
  const std::string kind = require_string(j, "kind", where);
  if (kind == "loop") {
    f.kind = ScopeKind::loop;
  } else if (kind == "branch") {
    f.kind = ScopeKind::branch;
  } else {
    throw ParseError(where + ": unknown scope kind '" + kind + "'");
  }
  f.id = require_string(j, "id", where);
  std::string arm = opt_string(j, "arm", where);
  if (!arm.empty()) f.arm = arm;
  return f;
}

IrInstruction parse_instruction(const json& j, const std::string& where) {
  if (!j.is_object()) throw ParseError(where + ": instructions must be objects");
  IrInstruction in;
  const json& ii = require(j, "ii", where);
  if (!ii.is_number_integer()) throw ParseError(where + ": \"ii\" must be an integer");
  in.ii = ii.get<int>();
  const std::string at = where + "@" + std::to_string(in.ii);
  const std::string kind = require_string(j, "kind", at);
  auto k = instr_kind_from_string(kind);
  if (!k) throw ParseError(at + ": unknown instruction kind '" + kind + "'");
  in.kind = *k;

  if (auto p = j.find("params"); p != j.end() && !p->is_null()) {
    if (!p->is_object()) throw ParseError(at + ": \"params\" must be an object");
    in.params.ownerType = opt_string(*p, "ownerType", at);
    in.params.fieldName = opt_string(*p, "fieldName", at);
    in.params.fieldType = opt_string(*p, "fieldType", at);
    in.params.methodName = opt_string(*p, "methodName", at);
    in.params.branchId = opt_string(*p, "branchId", at);
    for (const auto& a : require_array(*p, "arms", at, true)) {
      if (!a.is_string()) throw ParseError(at + ": arms must be strings");
      in.params.arms.push_back(a.get<std::string>());
    }
    if (auto t = p->find("target"); t != p->end() && !t->is_null()) {
      if (!t->is_number_integer()) throw ParseError(at + ": \"target\" must be an integer");
      in.params.target = t->get<int>();
    }
  }
  std::string def = opt_string(j, "def", at);
  if (!def.empty()) in.defVar = def;
  for (const auto& u : require_array(j, "use", at, true)) {
    if (!u.is_string()) throw ParseError(at + ": \"use\" entries must be strings");
    in.usedVars.push_back(u.get<std::string>());
  }
  for (const auto& s : require_array(j, "scope", at, true)) in.scopeChain.push_back(parse_frame(s, at));
  in.note = opt_string(j, "note", at);
  return in;
}

MethodDecl parse_method(const json& j, const std::string& owner) {
  if (!j.is_object()) throw ParseError(owner + ": methods must be objects");
  MethodDecl m;
  m.name = require_string(j, "name", owner);
  const std::string where = owner + "." + m.name;
  for (const auto& p : require_array(j, "params", where, true)) {
    if (!p.is_object()) throw ParseError(where + ": params must be objects");
    m.params.push_back({require_string(p, "name", where), require_string(p, "type", where)});
  }
  std::string ret = opt_string(j, "returns", where);
  if (!ret.empty()) m.returnType = ret;
  std::string ov = opt_string(j, "overridesMethodOf", where);
  if (!ov.empty()) m.overridesMethodOf = ov;
  for (const auto& i : require_array(j, "instructions", where, true))
    m.instructions.push_back(parse_instruction(i, where));
  return m;
}

TypeDecl parse_type(const json& j) {
  if (!j.is_object()) throw ParseError("types must be objects");
  TypeDecl t;
  t.name = require_string(j, "name", "type");
  if (auto p = j.find("persistent"); p != j.end()) {
    if (!p->is_boolean()) throw ParseError(t.name + ": \"persistent\" must be a boolean");
    t.persistent = p->get<bool>();
  }
  for (const auto& f : require_array(j, "fields", t.name, true)) {
    if (!f.is_object()) throw ParseError(t.name + ": fields must be objects");
    FieldDecl fd;
    fd.name = require_string(f, "name", t.name);
    fd.targetType = require_string(f, "type", t.name + "." + fd.name);
    fd.cardinality = parse_cardinality(opt_string(f, "cardinality", t.name), t.name + "." + fd.name);
    t.fields.push_back(std::move(fd));
  }
  for (const auto& m : require_array(j, "methods", t.name, true)) t.methods.push_back(parse_method(m, t.name));
  return t;
}

void require_type(const ApplicationModel& model, const std::string& type, const std::string& where) {
  if (!is_primitive(type) && !model.is_declared_type(type))
    throw ResolveError(where + ": unknown type '" + type + "'", type);
}

// Binds every name; dangling references are reported by name.
void resolve(const ApplicationModel& model) {
  for (const auto& t : model.types) {
    for (const auto& f : t.fields) require_type(model, f.targetType, t.name + "." + f.name);
    for (const auto& m : t.methods) {
      const std::string where = t.name + "." + m.name;
      for (const auto& p : m.params) require_type(model, p.type, where);
      require_type(model, m.returnType, where);
      if (m.overridesMethodOf) require_type(model, *m.overridesMethodOf, where);
      for (const auto& in : m.instructions) {
        const std::string at = where + "@" + std::to_string(in.ii);
        switch (in.kind) {
          case InstrKind::getfield:
          case InstrKind::putfield: {
            require_type(model, in.params.ownerType, at);
            const TypeDecl* owner = model.find_type(in.params.ownerType);
            if (!owner || !owner->find_field(in.params.fieldName))
              throw ResolveError(at + ": unknown field '" + in.params.ownerType + "." +
                                     in.params.fieldName + "'",
                                 in.params.fieldName);
            break;
          }
          case InstrKind::invokemethod: {
            require_type(model, in.params.ownerType, at);
            MethodRef ref{in.params.ownerType, in.params.methodName};
            if (!model.find_method(ref))
              throw ResolveError(at + ": unknown method '" + ref.str() + "'", ref.str());
            break;
          }
          default:
            break;
        }
      }
    }
  }
  for (const auto& e : model.entryPoints)
    if (!model.find_method(e)) throw ResolveError("unknown entry point '" + e.str() + "'", e.str());
}

ordered_json frame_to_json(const ScopeFrame& f) {
  ordered_json j;
  j["kind"] = f.kind == ScopeKind::loop ? "loop" : "branch";
  j["id"] = f.id;
  j["arm"] = f.arm ? ordered_json(*f.arm) : ordered_json(nullptr);
  return j;
}

ordered_json instruction_to_json(const IrInstruction& in) {
  ordered_json j;
  j["ii"] = in.ii;
  j["kind"] = std::string(to_string(in.kind));
  ordered_json p = ordered_json::object();
  const auto& ps = in.params;
  if (!ps.ownerType.empty()) p["ownerType"] = ps.ownerType;
  if (!ps.fieldName.empty()) p["fieldName"] = ps.fieldName;
  if (!ps.fieldType.empty()) p["fieldType"] = ps.fieldType;
  if (!ps.methodName.empty()) p["methodName"] = ps.methodName;
  if (!ps.branchId.empty()) p["branchId"] = ps.branchId;
  if (!ps.arms.empty()) p["arms"] = ps.arms;
  if (ps.target) p["target"] = *ps.target;
  j["params"] = std::move(p);
  j["def"] = in.defVar ? ordered_json(*in.defVar) : ordered_json(nullptr);
  j["use"] = in.usedVars;
  ordered_json scope = ordered_json::array();
  for (const auto& f : in.scopeChain) scope.push_back(frame_to_json(f));
  j["scope"] = std::move(scope);
  if (!in.note.empty()) j["note"] = in.note;
  return j;
}

}  // namespace

json parse_json_text(std::string_view text) {
  try {
    return json::parse(text.begin(), text.end());
  } catch (const json::parse_error& e) {
    auto [line, column] = line_column(text, e.byte > 0 ? e.byte - 1 : 0);
    throw ParseError("malformed JSON", line, column);
  }
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_json_text(ss.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write '" + path.string() + "'");
  out << text;
}

ApplicationModel application_from_json(const json& doc) {
  if (!doc.is_object()) throw ParseError("application file must hold a JSON object");
  ApplicationModel model;
  for (const auto& t : require_array(doc, "types", "application", true)) model.types.push_back(parse_type(t));
  for (const auto& e : require_array(doc, "entryPoints", "application", true)) {
    if (!e.is_string()) throw ParseError("entry points must be strings");
    model.entryPoints.push_back(MethodRef::parse(e.get<std::string>()));
  }
  for (auto& t : model.types)
    for (auto& m : t.methods) normalize_method(m);
  model.reindex();
  resolve(model);
  return model;
}

ApplicationModel parse_application_text(std::string_view text) {
  return application_from_json(parse_json_text(text));
}

ApplicationModel parse_application(const std::filesystem::path& path) {
  json doc = read_json_file(path);
  return application_from_json(doc);
}

ordered_json application_to_json(const ApplicationModel& model) {
  ordered_json doc;
  ordered_json types = ordered_json::array();
  for (const auto& t : model.types) {
    ordered_json jt;
    jt["name"] = t.name;
    jt["persistent"] = t.persistent;
    ordered_json fields = ordered_json::array();
    for (const auto& f : t.fields) {
      fields.push_back({{"name", f.name},
                        {"type", f.targetType},
                        {"cardinality", std::string(to_string(f.cardinality))}});
    }
    jt["fields"] = std::move(fields);
    ordered_json methods = ordered_json::array();
    for (const auto& m : t.methods) {
      ordered_json jm;
      jm["name"] = m.name;
      ordered_json params = ordered_json::array();
      for (const auto& p : m.params) params.push_back({{"name", p.name}, {"type", p.type}});
      jm["params"] = std::move(params);
      jm["returns"] = m.returnType;
      if (m.overridesMethodOf) jm["overridesMethodOf"] = *m.overridesMethodOf;
      ordered_json body = ordered_json::array();
      for (const auto& in : m.instructions) body.push_back(instruction_to_json(in));
      jm["instructions"] = std::move(body);
      methods.push_back(std::move(jm));
    }
    jt["methods"] = std::move(methods);
    types.push_back(std::move(jt));
  }
  doc["types"] = std::move(types);
  ordered_json entries = ordered_json::array();
  for (const auto& e : model.entryPoints) entries.push_back(e.str());
  doc["entryPoints"] = std::move(entries);
  return doc;
}

std::string serialize_application(const ApplicationModel& model) {
  return application_to_json(model).dump(2) + "\n";
}

}  // namespace caprelab
