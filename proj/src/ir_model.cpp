#include "caprelab/ir_model.hpp"

#include <algorithm>
#include <array>
#include <set>
#include <unordered_set>

#include "json.hpp"

namespace caprelab {

namespace {

constexpr std::array<std::string_view, 10> kInstrNames = {
    "getfield", "putfield", "arrayload", "invokemethod", "conditionalbranch",
    "goto",     "return",   "break",     "continue",     "noop",
};

constexpr std::array<std::string_view, 12> kPrimitives = {
    "int", "long", "short", "byte", "char", "boolean",
    "bool", "float", "double", "string", "String", "void",
};

bool is_library_owner(std::string_view owner) {
  return owner.starts_with("java/") || owner.starts_with("java.");
}

std::string location(const TypeDecl& t, const MethodDecl& m, int ii) {
  return t.name + "." + m.name + "@" + std::to_string(ii);
}

}  // namespace

std::string_view to_string(Cardinality c) {
  return c == Cardinality::single ? "single" : "collection";
}

std::string param_var(std::size_t index) { return "p" + std::to_string(index); }

std::optional<std::size_t> param_index(std::string_view var) {
  if (var.size() < 2 || var[0] != 'p') return std::nullopt;
  std::size_t value = 0;
  for (char c : var.substr(1)) {
    if (c < '0' || c > '9') return std::nullopt;
    value = value * 10 + static_cast<std::size_t>(c - '0');
  }
  return value;
}

bool is_primitive(std::string_view type) {
  return std::find(kPrimitives.begin(), kPrimitives.end(), type) != kPrimitives.end();
}

std::string_view to_string(InstrKind k) { return kInstrNames[static_cast<std::size_t>(k)]; }

std::optional<InstrKind> instr_kind_from_string(std::string_view s) {
  for (std::size_t i = 0; i < kInstrNames.size(); ++i)
    if (kInstrNames[i] == s) return static_cast<InstrKind>(i);
  return std::nullopt;
}

bool IrInstruction::in_loop() const {
  return std::any_of(scopeChain.begin(), scopeChain.end(),
                     [](const ScopeFrame& f) { return f.kind == ScopeKind::loop; });
}

bool IrInstruction::in_branch() const {
  return std::any_of(scopeChain.begin(), scopeChain.end(),
                     [](const ScopeFrame& f) { return f.kind == ScopeKind::branch; });
}

const FieldDecl* TypeDecl::find_field(std::string_view field) const {
  for (const auto& f : fields)
    if (f.name == field) return &f;
  return nullptr;
}

const MethodDecl* TypeDecl::find_method(std::string_view method) const {
  for (const auto& m : methods)
    if (m.name == method) return &m;
  return nullptr;
}

MethodRef MethodRef::parse(std::string_view text) {
  auto dot = text.rfind('.');
  if (dot == std::string_view::npos || dot == 0 || dot + 1 == text.size())
    throw ParseError("malformed method reference '" + std::string(text) +
                     "' (expected Owner.method)");
  return MethodRef{std::string(text.substr(0, dot)), std::string(text.substr(dot + 1))};
}

void ApplicationModel::reindex() {
  index_.clear();
  overridden_.clear();
  methods_.clear();
  for (std::size_t i = 0; i < types.size(); ++i) {
    index_.emplace(types[i].name, i);
    for (std::size_t k = 0; k < types[i].methods.size(); ++k)
      methods_.emplace(types[i].name + "." + types[i].methods[k].name, std::pair{i, k});
  }
  for (const auto& t : types)
    for (const auto& m : t.methods)
      if (m.overridesMethodOf) overridden_[*m.overridesMethodOf + "." + m.name] = true;
}

const TypeDecl* ApplicationModel::find_type(std::string_view name) const {
  if (index_.size() == types.size() && !types.empty()) {
    auto it = index_.find(std::string(name));
    return it == index_.end() ? nullptr : &types[it->second];
  }
  for (const auto& t : types)
    if (t.name == name) return &t;
  return nullptr;
}

const MethodDecl* ApplicationModel::find_method(const MethodRef& ref) const {
  if (index_.size() == types.size() && !types.empty()) {
    auto it = methods_.find(ref.str());
    if (it == methods_.end()) return nullptr;
    const auto [t, m] = it->second;
    if (t < types.size() && m < types[t].methods.size() && types[t].methods[m].name == ref.method &&
        types[t].name == ref.owner)
      return &types[t].methods[m];
  }
  const TypeDecl* t = find_type(ref.owner);
  return t ? t->find_method(ref.method) : nullptr;
}

bool ApplicationModel::is_persistent_type(std::string_view name) const {
  const TypeDecl* t = find_type(name);
  return t && t->persistent;
}

bool ApplicationModel::is_overridden(const MethodRef& ref) const {
  if (index_.size() == types.size() && !types.empty())
    return overridden_.contains(ref.str());
  for (const auto& t : types)
    for (const auto& m : t.methods)
      if (m.overridesMethodOf && *m.overridesMethodOf == ref.owner && m.name == ref.method)
        return true;
  return false;
}

std::vector<MethodRef> ApplicationModel::all_methods() const {
  std::vector<MethodRef> out;
  for (const auto& t : types)
    for (const auto& m : t.methods) out.push_back({t.name, m.name});
  return out;
}

std::size_t ApplicationModel::instruction_count() const {
  std::size_t n = 0;
  for (const auto& t : types)
    for (const auto& m : t.methods) n += m.instructions.size();
  return n;
}

bool is_branch_dependent(const IrInstruction& instr) {
  if (instr.in_branch()) return true;
  const bool exits = instr.kind == InstrKind::return_ || instr.kind == InstrKind::break_ ||
                     instr.kind == InstrKind::continue_;
  return exits && instr.in_loop();
}

std::string ValidationReport::to_json_lines() const {
  std::string out;
  for (const auto& v : violations) {
    nlohmann::ordered_json j;
    j["code"] = v.code;
    j["location"] = v.location;
    j["message"] = v.message;
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace {

class Validator {
 public:
  explicit Validator(const ApplicationModel& model) : model_(model) {}

  ValidationReport run() {
    std::set<std::string> typeNames;
    for (const auto& t : model_.types) {
      if (!typeNames.insert(t.name).second)
        add("duplicate-type", t.name, "type '" + t.name + "' declared more than once");
      check_type(t);
    }
    for (const auto& e : model_.entryPoints)
      if (!model_.find_method(e))
        add("unknown-method", e.str(), "entry point '" + e.str() + "' is not declared");
    return std::move(report_);
  }

 private:
  void add(std::string code, std::string where, std::string message) {
    report_.violations.push_back({std::move(code), std::move(where), std::move(message)});
  }

  bool resolves(std::string_view type) const {
    return is_primitive(type) || model_.is_declared_type(type);
  }

  void check_type(const TypeDecl& t) {
    std::set<std::string> fieldNames;
    for (const auto& f : t.fields) {
      const std::string where = t.name + "." + f.name;
      if (!fieldNames.insert(f.name).second)
        add("duplicate-field", where, "field '" + f.name + "' declared more than once");
      if (!resolves(f.targetType))
        add("unknown-type", where, "field type '" + f.targetType + "' is not declared");
      else if (f.cardinality == Cardinality::collection && !model_.is_declared_type(f.targetType))
        add("primitive-collection", where, "collection fields must hold a declared type");
    }
    std::set<std::string> methodNames;
    for (const auto& m : t.methods) {
      const std::string where = t.name + "." + m.name;
      if (!methodNames.insert(m.name).second)
        add("duplicate-method", where, "method '" + m.name + "' declared more than once");
      for (const auto& p : m.params)
        if (!resolves(p.type))
          add("unknown-type", where, "parameter type '" + p.type + "' is not declared");
      if (!resolves(m.returnType))
        add("unknown-type", where, "return type '" + m.returnType + "' is not declared");
      if (m.overridesMethodOf) {
        const TypeDecl* base = model_.find_type(*m.overridesMethodOf);
        if (!base || !base->find_method(m.name))
          add("bad-override", where,
              "overridesMethodOf '" + *m.overridesMethodOf + "' does not declare " + m.name);
      }
      check_body(t, m);
    }
  }

  void check_body(const TypeDecl& t, const MethodDecl& m) {
    std::unordered_set<std::string> defined{std::string(kSelfVar)};
    for (std::size_t i = 0; i < m.params.size(); ++i) defined.insert(param_var(i));

    std::unordered_set<std::string> closedScopes;
    std::vector<std::string> openScopes;

    for (std::size_t idx = 0; idx < m.instructions.size(); ++idx) {
      const auto& in = m.instructions[idx];
      const std::string where = location(t, m, in.ii);
      if (in.ii != static_cast<int>(idx))
        add("ii-order", where, "instruction indices must be 0-based, dense and increasing");

      for (const auto& u : in.usedVars)
        if (!defined.contains(u))
          add("undefined-var", where, "variable '" + u + "' is used before definition");
      if (in.defVar) {
        if (*in.defVar == kSelfVar || param_index(*in.defVar) || !defined.insert(*in.defVar).second)
          add("redefined-var", where, "variable '" + *in.defVar + "' is assigned more than once");
      }

      check_scopes(in, where, openScopes, closedScopes);

      switch (in.kind) {
        case InstrKind::getfield:
        case InstrKind::putfield: {
          const TypeDecl* owner = model_.find_type(in.params.ownerType);
          const FieldDecl* f = owner ? owner->find_field(in.params.fieldName) : nullptr;
          if (!f) {
            add("unknown-field", where,
                "field '" + in.params.ownerType + "." + in.params.fieldName + "' is not declared");
          } else if (!in.params.fieldType.empty() && in.params.fieldType != f->targetType) {
            add("field-type-mismatch", where,
                "declared field type is '" + f->targetType + "', instruction says '" +
                    in.params.fieldType + "'");
          }
          if (in.usedVars.empty())
            add("missing-operand", where, std::string(to_string(in.kind)) + " needs an object operand");
          break;
        }
        case InstrKind::arrayload:
          if (!in.in_loop())
            add("arrayload-outside-loop", where, "collection element access must be inside a loop");
          if (in.usedVars.empty())
            add("missing-operand", where, "arrayload needs a collection operand");
          break;
        case InstrKind::invokemethod: {
          const MethodDecl* callee =
              model_.find_method({in.params.ownerType, in.params.methodName});
          if (!callee) {
            add("unknown-method", where,
                "method '" + in.params.ownerType + "." + in.params.methodName +
                    "' is not declared");
          } else if (in.usedVars.size() != callee->params.size() + 1) {
            add("arity", where, "expected receiver plus " + std::to_string(callee->params.size()) +
                                    " argument(s)");
          }
          break;
        }
        default:
          break;
      }
    }
  }

  // Every scope frame (and every arm of a branch frame) must cover a
  // contiguous run of instructions.
  void check_scopes(const IrInstruction& in, const std::string& where,
                    std::vector<std::string>& open, std::unordered_set<std::string>& closed) {
    std::vector<std::string> keys;
    std::string prefix;
    for (const auto& f : in.scopeChain) {
      if (f.kind == ScopeKind::branch && !f.arm)
        add("branch-without-arm", where, "branch frame '" + f.id + "' has no arm");
      prefix += (f.kind == ScopeKind::loop ? "L:" : "B:") + f.id;
      keys.push_back(prefix);
      if (f.kind == ScopeKind::branch) {
        prefix += "#" + f.arm.value_or("");
        keys.push_back(prefix);
      }
      prefix += "/";
    }
    for (const auto& k : open)
      if (std::find(keys.begin(), keys.end(), k) == keys.end()) closed.insert(k);
    for (const auto& k : keys)
      if (closed.contains(k))
        add("scope-not-contiguous", where, "scope '" + k + "' resumes after it was closed");
    open = std::move(keys);
  }

  const ApplicationModel& model_;
  ValidationReport report_;
};

}  // namespace

ValidationReport validate_model(const ApplicationModel& model) { return Validator(model).run(); }

void normalize_method(MethodDecl& method) {
  std::unordered_map<std::string, std::string> iteratorOf;  // iterator var -> collection var
  for (auto& in : method.instructions) {
    if (in.kind != InstrKind::invokemethod || !is_library_owner(in.params.ownerType)) continue;
    const std::string name = in.params.methodName;
    const bool isIteratorOwner = in.params.ownerType.find("Iterator") != std::string::npos;
    if (name == "iterator" && in.defVar && !in.usedVars.empty()) {
      iteratorOf[*in.defVar] = in.usedVars.front();
    }
    if (name == "next" && isIteratorOwner && !in.usedVars.empty()) {
      auto it = iteratorOf.find(in.usedVars.front());
      if (it != iteratorOf.end()) {
        in.kind = InstrKind::arrayload;
        in.usedVars = {it->second};
        in.params = {};
        continue;
      }
    }
    in.kind = InstrKind::noop;
    in.params = {};
  }
}

}  // namespace caprelab
