#include "interpreter.hpp"

#include <algorithm>

namespace caprelab::detail {

// ------------------------------------------------------------------ compiler

int CompiledProgram::find(const MethodRef& ref) const {
  auto it = index.find(ref);
  return it == index.end() ? -1 : it->second;
}

namespace {

class MethodCompiler {
 public:
  MethodCompiler(const ApplicationModel& model, const StoreState& store, const TypeDecl& owner, const MethodDecl& m)
      : model_(model), store_(store), owner_(owner), m_(m) {}

  CompiledMethod compile() {
    cm_.ref = {owner_.name, m_.name};
    cm_.name = cm_.ref.str();
    cm_.ownerLayout = store_.typeIndex.at(owner_.name);
    cm_.numParams = static_cast<int>(m_.params.size());
    slot(std::string(kSelfVar));
    for (std::size_t i = 0; i < m_.params.size(); ++i) slot(param_var(i));

    for (const auto& in : m_.instructions)
      if (in.kind == InstrKind::conditionalbranch && !in.params.branchId.empty() && !in.params.arms.empty())
        cm_.branchArms[in.params.branchId] = in.params.arms;

    for (const auto& in : m_.instructions) {
      CInstr c;
      c.kind = in.kind;
      c.ii = in.ii;
      for (const auto& u : in.usedVars) c.uses.push_back(slot(u));
      if (in.defVar) c.def = slot(*in.defVar);
      c.branchId = in.params.branchId;
      if (in.kind == InstrKind::getfield || in.kind == InstrKind::putfield) {
        c.fieldName = in.params.fieldName;
        auto it = store_.typeIndex.find(in.params.ownerType);
        if (it != store_.typeIndex.end()) {
          c.ownerLayout = it->second;
          const TypeLayout& l = store_.layouts[static_cast<std::size_t>(it->second)];
          if ((c.fieldSlot = l.single_index(c.fieldName)) >= 0) {
            c.fieldClass = FieldClass::single;
          } else if ((c.fieldSlot = l.collection_index(c.fieldName)) >= 0) {
            c.fieldClass = FieldClass::collection;
          } else if ((c.fieldSlot = l.prim_index(c.fieldName)) >= 0) {
            c.fieldClass = FieldClass::prim;
          }
        }
      }
      cm_.instrs.push_back(std::move(c));
    }

    cm_.regions.emplace_back();
    Region body = build_block(0, m_.instructions.size(), 0);
    cm_.regions[0] = std::move(body);
    cm_.body = 0;
    cm_.numSlots = static_cast<int>(slots_.size());
    return std::move(cm_);
  }

 private:
  int slot(const std::string& var) {
    auto [it, inserted] = slots_.emplace(var, static_cast<int>(slots_.size()));
    return it->second;
  }

  const std::vector<ScopeFrame>& chain(std::size_t i) const { return m_.instructions[i].scopeChain; }

  bool same_frame(std::size_t i, std::size_t depth, const ScopeFrame& f) const {
    const auto& c = chain(i);
    return c.size() > depth && c[depth].kind == f.kind && c[depth].id == f.id;
  }

  Region build_block(std::size_t begin, std::size_t end, std::size_t depth) {
    Region r;
    std::size_t i = begin;
    while (i < end) {
      if (chain(i).size() <= depth) {
        r.items.emplace_back(false, static_cast<int>(i));
        ++i;
        continue;
      }
      const ScopeFrame frame = chain(i)[depth];
      std::size_t j = i + 1;
      while (j < end && same_frame(j, depth, frame)) ++j;
      int idx = frame.kind == ScopeKind::loop ? build_loop(i, j, depth, frame.id) : build_branch(i, j, depth, frame.id);
      r.items.emplace_back(true, idx);
      i = j;
    }
    return r;
  }

  int build_loop(std::size_t begin, std::size_t end, std::size_t depth, const std::string& id) {
    const int idx = static_cast<int>(cm_.regions.size());
    cm_.regions.emplace_back();
    for (std::size_t i = begin; i < end; ++i) {
      const auto& c = chain(i);
      std::size_t innermost = depth;
      for (std::size_t k = depth; k < c.size(); ++k)
        if (c[k].kind == ScopeKind::loop) innermost = k;
      if (innermost != depth) continue;
      cm_.instrs[i].loopRegion = idx;
    }
    Region r = build_block(begin, end, depth + 1);
    r.kind = Region::Kind::loop;
    r.id = id;
    for (std::size_t i = begin; i < end; ++i)
      if (cm_.instrs[i].kind == InstrKind::arrayload && cm_.instrs[i].loopRegion == idx) {
        r.driver = static_cast<int>(i);
        break;
      }
    cm_.regions[static_cast<std::size_t>(idx)] = std::move(r);
    return idx;
  }

  int build_branch(std::size_t begin, std::size_t end, std::size_t depth, const std::string& id) {
    const int idx = static_cast<int>(cm_.regions.size());
    cm_.regions.emplace_back();
    Region r;
    r.kind = Region::Kind::branch;
    r.id = id;
    std::vector<std::pair<std::string, int>> runs;
    std::size_t i = begin;
    while (i < end) {
      const std::string arm = chain(i)[depth].arm.value_or("");
      std::size_t j = i + 1;
      while (j < end && chain(j)[depth].arm.value_or("") == arm) ++j;
      const int sub = static_cast<int>(cm_.regions.size());
      cm_.regions.emplace_back();
      Region block = build_block(i, j, depth + 1);
      cm_.regions[static_cast<std::size_t>(sub)] = std::move(block);
      runs.emplace_back(arm, sub);
      i = j;
    }
    auto declared = cm_.branchArms.find(id);
    if (declared != cm_.branchArms.end()) {
      r.arms = declared->second;
      for (const auto& [arm, sub] : runs)
        if (std::find(r.arms.begin(), r.arms.end(), arm) == r.arms.end()) r.arms.push_back(arm);
    } else {
      for (const auto& [arm, sub] : runs)
        if (std::find(r.arms.begin(), r.arms.end(), arm) == r.arms.end()) r.arms.push_back(arm);
      r.arms.push_back("");  // the arm no instruction belongs to
      cm_.branchArms[id] = r.arms;
    }
    r.armRegions.assign(r.arms.size(), -1);
    for (const auto& [arm, sub] : runs) {
      auto pos = static_cast<std::size_t>(std::find(r.arms.begin(), r.arms.end(), arm) - r.arms.begin());
      if (r.armRegions[pos] < 0) r.armRegions[pos] = sub;
    }
    cm_.regions[static_cast<std::size_t>(idx)] = std::move(r);
    return idx;
  }

  const ApplicationModel& model_;
  const StoreState& store_;
  const TypeDecl& owner_;
  const MethodDecl& m_;
  CompiledMethod cm_;
  std::unordered_map<std::string, int> slots_;
};

}  // namespace

CompiledProgram compile_program(const ApplicationModel& model, const StoreState& store) {
  CompiledProgram p;
  for (const auto& t : model.types)
    for (const auto& m : t.methods) {
      p.index.emplace(MethodRef{t.name, m.name}, static_cast<int>(p.methods.size()));
      p.methods.push_back(MethodCompiler(model, store, t, m).compile());
    }
  std::size_t k = 0;
  for (const auto& t : model.types)
    for (const auto& m : t.methods) {
      auto& cm = p.methods[k++];
      for (std::size_t i = 0; i < m.instructions.size(); ++i) {
        const auto& in = m.instructions[i];
        if (in.kind == InstrKind::invokemethod) cm.instrs[i].callee = p.find({in.params.ownerType, in.params.methodName});
      }
    }
  return p;
}

// ---------------------------------------------------------------- path table

PathTable::PathTable() { entries_.push_back({-1, {}}); }

int PathTable::child(int parent, const std::string& field, Cardinality c) {
  auto key = std::make_tuple(parent, field, c);
  auto it = index_.find(key);
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(entries_.size());
  entries_.push_back({parent, {field, c}});
  index_.emplace(std::move(key), id);
  return id;
}

FieldPath PathTable::path(int id) const {
  FieldPath out;
  for (int n = id; n > 0; n = entries_[static_cast<std::size_t>(n)].parent)
    out.push_back(entries_[static_cast<std::size_t>(n)].step);
  std::reverse(out.begin(), out.end());
  return out;
}

// ------------------------------------------------------------- branch oracle

BranchOracle::BranchOracle(const BranchOracleSpec& spec, std::uint64_t seed)
    : spec_(spec), rng_(seed ^ 0xc2b2ae3d27d4eb4fULL) {}

void BranchOracle::begin_step(std::size_t step) {
  step_ = step;
  cursor_ = 0;
}

namespace {

std::size_t arm_position(const std::vector<std::string>& arms, const std::string& want) {
  auto it = std::find(arms.begin(), arms.end(), want);
  if (it != arms.end()) return static_cast<std::size_t>(it - arms.begin());
  if (!want.empty() && std::all_of(want.begin(), want.end(), [](char c) { return c >= '0' && c <= '9'; }))
    return std::min<std::size_t>(std::stoul(want), arms.size() - 1);
  return 0;
}

}  // namespace

std::size_t BranchOracle::decide(const std::vector<std::string>& arms) {
  if (arms.size() <= 1) return 0;
  switch (spec_.mode) {
    case BranchOracleSpec::Mode::probability: {
      const double u = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
      if (u < spec_.p) return 0;
      return 1 + static_cast<std::size_t>(rng_() % (arms.size() - 1));
    }
    case BranchOracleSpec::Mode::fixed:
      return arm_position(arms, spec_.fixedArm);
    case BranchOracleSpec::Mode::scripted: {
      if (step_ >= spec_.script.size() || cursor_ >= spec_.script[step_].size()) return 0;
      return arm_position(arms, spec_.script[step_][cursor_++]);
    }
  }
  return 0;
}

// --------------------------------------------------------------- interpreter

Interpreter::Interpreter(const CompiledProgram& program, StoreState& store, BranchOracle& oracle,
                         InterpreterHooks& hooks, InterpreterOptions options)
    : program_(program),
      store_(store),
      oracle_(oracle),
      hooks_(hooks),
      options_(options),
      methodPaths_(program.methods.size()),
      executed_(program.methods.size(), false) {}

void Interpreter::record(const std::string& text) {
  ++reads_;
  for (unsigned char c : text) {
    digest_ ^= c;
    digest_ *= 1099511628211ULL;
  }
  digest_ ^= '\n';
  digest_ *= 1099511628211ULL;
  if (options_.keepReadLog) log_.push_back(text);
}

void Interpreter::fail(const Frame& f, const CInstr& in, const std::string& what) const {
  throw TraceError(f.method->name + "@" + std::to_string(in.ii) + ": " + what);
}

void Interpreter::run_step(const TraceStep& step, std::size_t index) {
  const std::string where = "step " + std::to_string(index) + " (" + step.method.str() + ")";
  const int root = store_.index_of(step.root);
  if (root < 0) throw TraceError(where + ": root object " + std::to_string(step.root) + " does not exist");
  const int method = program_.find(step.method);
  if (method < 0) throw TraceError(where + ": method is not declared");
  const auto& cm = program_.methods[static_cast<std::size_t>(method)];
  if (store_.objects[static_cast<std::size_t>(root)].type != cm.ownerLayout)
    throw TraceError(where + ": root object " + std::to_string(step.root) + " is a " +
                     store_.layout_of(root).name + ", not a " + cm.ref.owner);
  oracle_.begin_step(index);
  if (store_.persistent(root)) hooks_.on_access(root);
  Value self;
  self.kind = Value::Kind::object;
  self.obj = root;
  call(method, std::move(self), {}, 0);
}

Interpreter::Value Interpreter::call(int method, Value receiver, std::vector<Value> args, int depth) {
  const auto& cm = program_.methods[static_cast<std::size_t>(method)];
  if (depth >= options_.maxCallDepth)
    throw TraceError(cm.name + ": call depth exceeds " + std::to_string(options_.maxCallDepth));
  Frame f;
  f.method = &cm;
  f.slots.resize(static_cast<std::size_t>(cm.numSlots));
  f.loopIter.assign(cm.regions.size(), 0);
  const std::uint64_t activation = nextActivation_++;
  if (activeStack_.size() <= static_cast<std::size_t>(depth)) activeStack_.resize(static_cast<std::size_t>(depth) + 1);
  activeStack_[static_cast<std::size_t>(depth)] = activation;
  if (options_.trackPaths) receiver.tags.push_back({depth, activation, method, 0});
  const int self = receiver.obj;
  f.slots[0] = std::move(receiver);
  for (std::size_t i = 0; i < args.size() && i + 1 < f.slots.size(); ++i) f.slots[i + 1] = std::move(args[i]);
  executed_[static_cast<std::size_t>(method)] = true;

  hooks_.on_enter(method, self);
  exec_region(f, cm.body, depth);
  hooks_.on_exit(method);
  activeStack_[static_cast<std::size_t>(depth)] = 0;
  return std::move(f.ret);
}

Interpreter::Flow Interpreter::exec_region(Frame& f, int region, int depth) {
  const Region& r = f.method->regions[static_cast<std::size_t>(region)];
  auto run_items = [&]() -> Flow {
    for (const auto& [isRegion, idx] : r.items) {
      Flow flow = isRegion ? exec_region(f, idx, depth)
                           : exec_instr(f, f.method->instrs[static_cast<std::size_t>(idx)], depth);
      if (flow != Flow::normal) return flow;
    }
    return Flow::normal;
  };

  switch (r.kind) {
    case Region::Kind::block:
      return run_items();
    case Region::Kind::branch: {
      const std::size_t arm = decide(f, r.id);
      const int sub = arm < r.armRegions.size() ? r.armRegions[arm] : -1;
      return sub < 0 ? Flow::normal : exec_region(f, sub, depth);
    }
    case Region::Kind::loop: {
      if (r.driver < 0) {
        Flow flow = run_items();
        return flow == Flow::ret ? Flow::ret : Flow::normal;
      }
      const CInstr& drv = f.method->instrs[static_cast<std::size_t>(r.driver)];
      const Value& coll = f.slots[static_cast<std::size_t>(drv.uses.at(0))];
      if (coll.kind == Value::Kind::null) return Flow::normal;
      if (coll.kind != Value::Kind::collection) fail(f, drv, "loop collection is not available at loop entry");
      const std::size_t n =
          store_.objects[static_cast<std::size_t>(coll.obj)].collections[static_cast<std::size_t>(coll.slot)].size();
      for (std::size_t k = 0; k < n; ++k) {
        f.loopIter[static_cast<std::size_t>(region)] = static_cast<int>(k);
        Flow flow = run_items();
        if (flow == Flow::brk) break;
        if (flow == Flow::ret) return Flow::ret;
      }
      return Flow::normal;
    }
  }
  return Flow::normal;
}

std::size_t Interpreter::decide(Frame& f, const std::string& branchId) {
  if (auto it = f.decisions.find(branchId); it != f.decisions.end()) {
    std::size_t arm = it->second;
    f.decisions.erase(it);
    return arm;
  }
  const auto& arms = f.method->branchArms.at(branchId);
  std::size_t arm = oracle_.decide(arms);
  record("B " + f.method->name + "#" + branchId + "=" + arms[arm]);
  return arm;
}

Interpreter::Value Interpreter::navigate(const Value& from, const std::string& field, Cardinality c, Value out) {
  if (!options_.trackPaths) return out;
  for (const auto& t : from.tags) {
    const auto d = static_cast<std::size_t>(t.depth);
    if (d >= activeStack_.size() || activeStack_[d] != t.activation) continue;
    const int np = pathTable_.child(t.path, field, c);
    methodPaths_[static_cast<std::size_t>(t.method)].insert(np);
    out.tags.push_back({t.depth, t.activation, t.method, np});
  }
  return out;
}

Interpreter::Flow Interpreter::exec_instr(Frame& f, const CInstr& in, int depth) {
  auto slot = [&](std::size_t k) -> Value& {
    if (k >= in.uses.size()) fail(f, in, "missing operand");
    return f.slots[static_cast<std::size_t>(in.uses[k])];
  };
  auto define = [&](Value v) {
    if (in.def >= 0) f.slots[static_cast<std::size_t>(in.def)] = std::move(v);
  };
  auto oid_text = [&](int obj) { return obj < 0 ? std::string("null") : std::to_string(store_.objects[static_cast<std::size_t>(obj)].oid); };

  switch (in.kind) {
    case InstrKind::getfield: {
      const Value& base = slot(0);
      if (base.kind == Value::Kind::null) {
        define(Value::make(Value::Kind::null));
        return Flow::normal;
      }
      if (base.kind != Value::Kind::object) fail(f, in, "getfield on a non-object value");
      auto& obj = store_.objects[static_cast<std::size_t>(base.obj)];
      if (obj.type != in.ownerLayout || in.fieldClass == FieldClass::none)
        fail(f, in, "object " + std::to_string(obj.oid) + " has no field '" + in.fieldName + "'");
      if (store_.persistent(base.obj)) hooks_.on_access(base.obj);
      const std::string prefix = "R " + std::to_string(obj.oid) + "." + in.fieldName + "=";
      const auto s = static_cast<std::size_t>(in.fieldSlot);
      switch (in.fieldClass) {
        case FieldClass::single: {
          const int target = obj.singles[s];
          record(prefix + oid_text(target));
          Value out;
          out.kind = target < 0 ? Value::Kind::null : Value::Kind::object;
          out.obj = target;
          if (target >= 0) {
            out = navigate(base, in.fieldName, Cardinality::single, std::move(out));
            if (store_.persistent(target)) hooks_.on_access(target);
          }
          define(std::move(out));
          break;
        }
        case FieldClass::collection: {
          record(prefix + "[" + std::to_string(obj.collections[s].size()) + "]");
          Value out;
          out.kind = Value::Kind::collection;
          out.obj = base.obj;
          out.slot = in.fieldSlot;
          out.tags = base.tags;
          define(std::move(out));
          break;
        }
        default: {
          record(prefix + obj.prims[s]);
          Value out;
          out.kind = Value::Kind::prim;
          out.prim = obj.prims[s];
          define(std::move(out));
          break;
        }
      }
      return Flow::normal;
    }
    case InstrKind::putfield: {
      const Value& base = slot(0);
      if (base.kind == Value::Kind::null) return Flow::normal;
      if (base.kind != Value::Kind::object) fail(f, in, "putfield on a non-object value");
      auto& obj = store_.objects[static_cast<std::size_t>(base.obj)];
      if (obj.type != in.ownerLayout || in.fieldClass == FieldClass::none)
        fail(f, in, "object " + std::to_string(obj.oid) + " has no field '" + in.fieldName + "'");
      if (store_.persistent(base.obj)) hooks_.on_access(base.obj);
      const Value* value = in.uses.size() > 1 ? &slot(1) : nullptr;
      const auto s = static_cast<std::size_t>(in.fieldSlot);
      std::string shown;
      switch (in.fieldClass) {
        case FieldClass::single:
          if (value && (value->kind == Value::Kind::object || value->kind == Value::Kind::null)) {
            obj.singles[s] = value->kind == Value::Kind::object ? value->obj : -1;
          }
          shown = oid_text(obj.singles[s]);
          break;
        case FieldClass::collection:
          if (value && value->kind == Value::Kind::collection && value->obj != base.obj) {
            obj.collections[s] = store_.objects[static_cast<std::size_t>(value->obj)]
                                     .collections[static_cast<std::size_t>(value->slot)];
          }
          shown = "[" + std::to_string(obj.collections[s].size()) + "]";
          break;
        default:
          obj.prims[s] = value && value->kind == Value::Kind::prim ? value->prim : "\"w" + std::to_string(in.ii) + "\"";
          shown = obj.prims[s];
          break;
      }
      record("W " + std::to_string(obj.oid) + "." + in.fieldName + "=" + shown);
      return Flow::normal;
    }
    case InstrKind::arrayload: {
      const Value& coll = slot(0);
      if (coll.kind == Value::Kind::null) {
        define(Value::make(Value::Kind::null));
        return Flow::normal;
      }
      if (coll.kind != Value::Kind::collection) fail(f, in, "arrayload on a non-collection value");
      const auto& owner = store_.objects[static_cast<std::size_t>(coll.obj)];
      const auto& list = owner.collections[static_cast<std::size_t>(coll.slot)];
      const int k = in.loopRegion >= 0 ? f.loopIter[static_cast<std::size_t>(in.loopRegion)] : 0;
      const std::string& field = store_.layout_of(coll.obj).collections[static_cast<std::size_t>(coll.slot)];
      Value out;
      if (k < 0 || static_cast<std::size_t>(k) >= list.size()) {
        out.kind = Value::Kind::null;
        record("R " + std::to_string(owner.oid) + "." + field + "[" + std::to_string(k) + "]=null");
        define(std::move(out));
        return Flow::normal;
      }
      const int elem = list[static_cast<std::size_t>(k)];
      record("R " + std::to_string(owner.oid) + "." + field + "[" + std::to_string(k) + "]=" + oid_text(elem));
      out.kind = Value::Kind::object;
      out.obj = elem;
      out = navigate(coll, field, Cardinality::collection, std::move(out));
      if (store_.persistent(elem)) hooks_.on_access(elem);
      define(std::move(out));
      return Flow::normal;
    }
    case InstrKind::invokemethod: {
      if (in.callee < 0) fail(f, in, "invocation of an undeclared method");
      Value receiver = slot(0);
      if (receiver.kind == Value::Kind::null) {
        define(Value::make(Value::Kind::null));
        return Flow::normal;
      }
      if (receiver.kind != Value::Kind::object) fail(f, in, "invocation receiver is not an object");
      std::vector<Value> args;
      for (std::size_t k = 1; k < in.uses.size(); ++k) args.push_back(slot(k));
      define(call(in.callee, std::move(receiver), std::move(args), depth + 1));
      return Flow::normal;
    }
    case InstrKind::conditionalbranch: {
      if (in.branchId.empty()) return Flow::normal;
      auto it = f.method->branchArms.find(in.branchId);
      if (it == f.method->branchArms.end()) return Flow::normal;
      const std::size_t arm = oracle_.decide(it->second);
      record("B " + f.method->name + "#" + in.branchId + "=" + it->second[arm]);
      f.decisions[in.branchId] = arm;
      define(Value::make(Value::Kind::prim));
      return Flow::normal;
    }
    case InstrKind::return_:
      if (!in.uses.empty()) f.ret = slot(0);
      return Flow::ret;
    case InstrKind::break_:
      return Flow::brk;
    case InstrKind::continue_:
      return Flow::cont;
    default:
      define(Value{});
      return Flow::normal;
  }
}

}  // namespace caprelab::detail
