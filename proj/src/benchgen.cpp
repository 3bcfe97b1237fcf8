#include "caprelab/benchgen.hpp"

#include <algorithm>
#include <deque>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <unordered_map>

namespace caprelab {

// ----------------------------------------------------------- method builder

MethodBuilder::MethodBuilder(std::string name) { m_.name = std::move(name); }

MethodBuilder& MethodBuilder::param(std::string name, std::string type) {
  m_.params.push_back({std::move(name), std::move(type)});
  return *this;
}

MethodBuilder& MethodBuilder::returns(std::string type) {
  m_.returnType = std::move(type);
  return *this;
}

MethodBuilder& MethodBuilder::overrides(std::string type) {
  m_.overridesMethodOf = std::move(type);
  return *this;
}

std::string MethodBuilder::fresh() { return "v" + std::to_string(nextVar_++); }

IrInstruction& MethodBuilder::emit(InstrKind kind) {
  IrInstruction in;
  in.ii = static_cast<int>(m_.instructions.size());
  in.kind = kind;
  in.scopeChain = scope_;
  m_.instructions.push_back(std::move(in));
  return m_.instructions.back();
}

std::string MethodBuilder::get(const std::string& base, const std::string& owner, const std::string& field,
                               const std::string& fieldType) {
  auto& in = emit(InstrKind::getfield);
  in.params.ownerType = owner;
  in.params.fieldName = field;
  in.params.fieldType = fieldType;
  in.usedVars = {base};
  in.defVar = fresh();
  return *in.defVar;
}

void MethodBuilder::put(const std::string& base, const std::string& owner, const std::string& field,
                        const std::string& fieldType, const std::optional<std::string>& value) {
  auto& in = emit(InstrKind::putfield);
  in.params.ownerType = owner;
  in.params.fieldName = field;
  in.params.fieldType = fieldType;
  in.usedVars = {base};
  if (value) in.usedVars.push_back(*value);
}

std::string MethodBuilder::elem(const std::string& collection) {
  auto& in = emit(InstrKind::arrayload);
  in.usedVars = {collection};
  in.defVar = fresh();
  return *in.defVar;
}

std::optional<std::string> MethodBuilder::call(const std::string& receiver, const std::string& owner,
                                               const std::string& method, const std::vector<std::string>& args,
                                               bool defines) {
  auto& in = emit(InstrKind::invokemethod);
  in.params.ownerType = owner;
  in.params.methodName = method;
  in.usedVars = {receiver};
  in.usedVars.insert(in.usedVars.end(), args.begin(), args.end());
  if (defines) in.defVar = fresh();
  return in.defVar;
}

void MethodBuilder::cond(const std::string& branchId, std::vector<std::string> arms, std::vector<std::string> uses) {
  auto& in = emit(InstrKind::conditionalbranch);
  in.params.branchId = branchId;
  in.params.arms = std::move(arms);
  in.usedVars = std::move(uses);
}

void MethodBuilder::ret(const std::optional<std::string>& var) {
  auto& in = emit(InstrKind::return_);
  if (var) in.usedVars = {*var};
}

void MethodBuilder::brk() { emit(InstrKind::break_); }

void MethodBuilder::noop(std::string note) { emit(InstrKind::noop).note = std::move(note); }

void MethodBuilder::loop(const std::string& id) { scope_.push_back({ScopeKind::loop, id, std::nullopt}); }

void MethodBuilder::arm(const std::string& branchId, const std::string& armName) {
  scope_.push_back({ScopeKind::branch, branchId, armName});
}

void MethodBuilder::end() {
  if (!scope_.empty()) scope_.pop_back();
}

MethodDecl MethodBuilder::build() const { return m_; }

// ------------------------------------------------------------------ helpers

namespace {

constexpr const char* kSelf = "v_self";

FieldDecl single(std::string name, std::string type) { return {std::move(name), std::move(type), Cardinality::single}; }
FieldDecl many(std::string name, std::string type) { return {std::move(name), std::move(type), Cardinality::collection}; }
FieldDecl prim(std::string name, std::string type = "int") { return {std::move(name), std::move(type), Cardinality::single}; }

void require_positive(long long v, const std::string& what) {
  if (v <= 0) throw SpecError(what + " must be positive");
}

class DatasetWriter {
 public:
  ObjectRecord& add(const std::string& type) {
    ObjectRecord r;
    r.oid = next_++;
    r.typeName = type;
    index_[r.oid] = ds_.objects.size();
    ds_.objects.push_back(std::move(r));
    return ds_.objects.back();
  }
  ObjectRecord& at(Oid oid) { return ds_.objects[index_.at(oid)]; }
  Dataset take() { return std::move(ds_); }

 private:
  Dataset ds_;
  Oid next_ = 1;
  std::unordered_map<Oid, std::size_t> index_;
};

class DatasetIndex {
 public:
  explicit DatasetIndex(const Dataset& ds) : ds_(ds) {
    for (std::size_t i = 0; i < ds.objects.size(); ++i) index_[ds.objects[i].oid] = i;
  }
  const ObjectRecord& at(Oid oid) const {
    auto it = index_.find(oid);
    if (it == index_.end()) throw SpecError("dataset has no object " + std::to_string(oid));
    return ds_.objects[it->second];
  }
  const ObjectRecord& first_of(const std::string& type) const {
    for (const auto& r : ds_.objects)
      if (r.typeName == type) return r;
    throw SpecError("dataset has no " + type + " object");
  }
  std::optional<Oid> single(const ObjectRecord& r, const std::string& field) const {
    auto it = r.singles.find(field);
    return it == r.singles.end() ? std::nullopt : it->second;
  }
  const std::vector<Oid>& many(const ObjectRecord& r, const std::string& field) const {
    static const std::vector<Oid> none;
    auto it = r.collections.find(field);
    return it == r.collections.end() ? none : it->second;
  }

 private:
  const Dataset& ds_;
  std::unordered_map<Oid, std::size_t> index_;
};

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

void finish(ApplicationModel& m) {
  m.reindex();
  const auto report = validate_model(m);
  if (!report.ok()) throw Error("generated model is invalid: " + report.violations.front().message);
}

// --------------------------------------------------------------------- bank

ApplicationModel bank_model() {
  ApplicationModel m;
  m.types.push_back({"BankManagement", false, {many("transactions", "Transaction"), single("manager", "Customer")}, {}});
  m.types.push_back({"Transaction",
                     true,
                     {single("account", "Account"), single("emp", "Employee"), single("type", "TransactionType")},
                     {}});
  m.types.push_back({"Account", true, {single("cust", "Customer")}, {}});
  m.types.push_back({"Customer", true, {single("company", "Company"), prim("name", "string")}, {}});
  m.types.push_back({"Company", true, {prim("name", "string")}, {}});
  m.types.push_back({"Employee", true, {single("dept", "Department"), prim("name", "string")}, {}});
  m.types.push_back({"Department", true, {prim("name", "string")}, {}});
  m.types.push_back({"TransactionType", true, {prim("typeID")}, {}});

  {
    MethodBuilder b("getAccount");
    b.returns("Account");
    auto type = b.get(kSelf, "Transaction", "type", "TransactionType");
    auto id = b.get(type, "TransactionType", "typeID", "int");
    b.cond("b1", {"then", "else"}, {id});
    b.arm("b1", "then");
    b.get(kSelf, "Transaction", "emp", "Employee");
    b.noop("this.emp.doSmth()");
    b.end();
    b.arm("b1", "else");
    auto emp = b.get(kSelf, "Transaction", "emp", "Employee");
    b.get(emp, "Employee", "dept", "Department");
    b.noop("this.emp.dept.doSmthElse()");
    b.end();
    auto account = b.get(kSelf, "Transaction", "account", "Account");
    b.ret(account);
    m.types[1].methods.push_back(b.build());
  }
  {
    MethodBuilder b("setCustomer");
    b.param("newCust", "Customer");
    auto cust = b.get(kSelf, "Account", "cust", "Customer");
    auto c1 = b.get(cust, "Customer", "company", "Company");
    auto c2 = b.get("p0", "Customer", "company", "Company");
    b.cond("b1", {"then", "else"}, {c1, c2});
    b.arm("b1", "then");
    b.put(kSelf, "Account", "cust", "Customer", "p0");
    b.end();
    b.ret();
    m.types[2].methods.push_back(b.build());
  }
  {
    MethodBuilder b("setAllTransCustomers");
    auto trans = b.get(kSelf, "BankManagement", "transactions", "Transaction");
    b.loop("l1");
    auto t = b.elem(trans);
    auto account = b.call(t, "Transaction", "getAccount", {}, true);
    auto manager = b.get(kSelf, "BankManagement", "manager", "Customer");
    b.call(*account, "Account", "setCustomer", {manager});
    b.end();
    b.ret();
    m.types[0].methods.push_back(b.build());
  }
  m.entryPoints = {{"BankManagement", "setAllTransCustomers"}};
  finish(m);
  return m;
}

Dataset bank_dataset(const BenchmarkSpec& spec) {
  require_positive(spec.transactions, "transactions");
  std::mt19937_64 rng(spec.seed);
  DatasetWriter w;
  const Oid root = w.add("BankManagement").oid;
  std::vector<Oid> companies, customers, depts, employees, types, accounts;
  for (int i = 0; i < 3; ++i) {
    auto& c = w.add("Company");
    c.prims["name"] = "\"company" + std::to_string(i) + "\"";
    companies.push_back(c.oid);
  }
  const int numCustomers = std::max(2, spec.transactions / 5);
  for (int i = 0; i < numCustomers; ++i) {
    auto& c = w.add("Customer");
    c.singles["company"] = companies[pick(rng, companies.size())];
    c.prims["name"] = "\"customer" + std::to_string(i) + "\"";
    customers.push_back(c.oid);
  }
  for (int i = 0; i < 3; ++i) {
    auto& d = w.add("Department");
    d.prims["name"] = "\"dept" + std::to_string(i) + "\"";
    depts.push_back(d.oid);
  }
  for (int i = 0; i < std::max(1, spec.transactions / 10); ++i) {
    auto& e = w.add("Employee");
    e.singles["dept"] = depts[pick(rng, depts.size())];
    e.prims["name"] = "\"employee" + std::to_string(i) + "\"";
    employees.push_back(e.oid);
  }
  for (int i = 1; i <= 2; ++i) {
    auto& t = w.add("TransactionType");
    t.prims["typeID"] = std::to_string(i);
    types.push_back(t.oid);
  }
  for (int i = 0; i < std::max(1, spec.transactions / 2); ++i) {
    auto& a = w.add("Account");
    a.singles["cust"] = customers[pick(rng, customers.size())];
    accounts.push_back(a.oid);
  }
  std::vector<Oid> transactions;
  for (int i = 0; i < spec.transactions; ++i) {
    auto& t = w.add("Transaction");
    t.singles["account"] = accounts[pick(rng, accounts.size())];
    t.singles["emp"] = employees[pick(rng, employees.size())];
    t.singles["type"] = types[pick(rng, types.size())];
    transactions.push_back(t.oid);
  }
  auto& bm = w.at(root);
  bm.collections["transactions"] = transactions;
  bm.singles["manager"] = customers[0];
  return w.take();
}

// ---------------------------------------------------------------------- oo7

const char* kCA = "ComplexAssembly";
const char* kBA = "BaseAssembly";
const char* kCP = "CompositePart";
const char* kAP = "AtomicPart";

ApplicationModel oo7_model() {
  ApplicationModel m;
  TypeDecl module{"Module", true, {single("designRoot", kCA), single("manual", "Manual"), prim("id")}, {}};
  TypeDecl manual{"Manual", true, {single("module", "Module"), prim("text", "string")}, {}};
  TypeDecl ca{kCA,
              true,
              {many("subAssemblies", kCA), many("baseAssemblies", kBA), single("superAssembly", kCA),
               single("module", "Module"), prim("id")},
              {}};
  TypeDecl ba{kBA,
              true,
              {many("components", kCP), single("superAssembly", kCA), single("module", "Module"), prim("id")},
              {}};
  TypeDecl cp{kCP,
              true,
              {single("rootPart", kAP), single("documentation", "Document"), many("parts", kAP), prim("id")},
              {}};
  TypeDecl doc{"Document", true, {single("part", kCP), prim("title", "string")}, {}};
  TypeDecl ap{kAP,
              true,
              {single("partOf", kCP), many("connections", "Connection"), prim("x"), prim("y"), prim("docId"),
               prim("buildDate")},
              {}};
  TypeDecl conn{"Connection", true, {single("from", kAP), single("to", kAP), prim("length")}, {}};

  {
    MethodBuilder b("t1");
    auto root = b.get(kSelf, "Module", "designRoot", kCA);
    b.call(root, kCA, "traverse");
    b.ret();
    module.methods.push_back(b.build());
  }
  {
    MethodBuilder b("traverse");
    auto subs = b.get(kSelf, kCA, "subAssemblies", kCA);
    b.loop("l1");
    auto sub = b.elem(subs);
    b.call(sub, kCA, "traverse");
    b.end();
    auto bases = b.get(kSelf, kCA, "baseAssemblies", kBA);
    b.loop("l2");
    auto base = b.elem(bases);
    b.call(base, kBA, "traverse");
    b.end();
    b.ret();
    ca.methods.push_back(b.build());
  }
  {
    MethodBuilder b("traverse");
    auto comps = b.get(kSelf, kBA, "components", kCP);
    b.loop("l1");
    auto c = b.elem(comps);
    b.call(c, kCP, "traverse");
    b.end();
    b.ret();
    ba.methods.push_back(b.build());
  }
  {
    MethodBuilder b("traverse");
    auto root = b.get(kSelf, kCP, "rootPart", kAP);
    b.get(root, kAP, "x", "int");
    auto parts = b.get(kSelf, kCP, "parts", kAP);
    b.loop("l1");
    auto part = b.elem(parts);
    b.get(part, kAP, "x", "int");
    auto conns = b.get(part, kAP, "connections", "Connection");
    b.loop("l2");
    auto c = b.elem(conns);
    auto to = b.get(c, "Connection", "to", kAP);
    b.get(to, kAP, "y", "int");
    b.end();
    b.end();
    auto d = b.get(kSelf, kCP, "documentation", "Document");
    b.get(d, "Document", "title", "string");
    b.ret();
    cp.methods.push_back(b.build());
  }
  {
    MethodBuilder b("updateRootPart");
    auto root = b.get(kSelf, kCP, "rootPart", kAP);
    b.put(root, kAP, "x", "int");
    b.ret();
    cp.methods.push_back(b.build());
  }
  {
    MethodBuilder b("update");
    b.put(kSelf, kAP, "x", "int");
    b.ret();
    ap.methods.push_back(b.build());
  }
  {
    MethodBuilder b("update4");
    for (int i = 0; i < 2; ++i) {
      b.put(kSelf, kAP, "x", "int");
      b.put(kSelf, kAP, "y", "int");
    }
    b.ret();
    ap.methods.push_back(b.build());
  }
  m.types = {module, manual, ca, ba, cp, doc, ap, conn};
  m.entryPoints = {{"Module", "t1"}, {kCP, "updateRootPart"}, {kAP, "update"}, {kAP, "update4"}};
  finish(m);
  return m;
}

Dataset oo7_dataset(const Oo7Params& p, std::uint64_t seed) {
  require_positive(p.levels, "oo7 levels");
  require_positive(p.fanout, "oo7 fanout");
  require_positive(p.componentsPerBase, "oo7 componentsPerBase");
  require_positive(p.poolSize, "oo7 poolSize");
  require_positive(p.partsPerComposite, "oo7 partsPerComposite");
  require_positive(p.connectionsPerPart, "oo7 connectionsPerPart");
  std::mt19937_64 rng(seed);
  DatasetWriter w;
  const Oid module = w.add("Module").oid;
  const Oid manual = w.add("Manual").oid;
  w.at(module).singles["manual"] = manual;
  w.at(module).prims["id"] = "1";
  w.at(manual).singles["module"] = module;
  w.at(manual).prims["text"] = "\"manual\"";

  // Composite part library.
  std::vector<Oid> pool;
  for (int i = 0; i < p.poolSize; ++i) {
    const Oid cp = w.add(kCP).oid;
    w.at(cp).prims["id"] = std::to_string(i);
    const Oid doc = w.add("Document").oid;
    w.at(doc).singles["part"] = cp;
    w.at(doc).prims["title"] = "\"doc" + std::to_string(i) + "\"";
    std::vector<Oid> parts;
    for (int j = 0; j < p.partsPerComposite; ++j) {
      auto& ap = w.add(kAP);
      ap.singles["partOf"] = cp;
      ap.prims["x"] = std::to_string(pick(rng, 100000));
      ap.prims["y"] = std::to_string(pick(rng, 100000));
      ap.prims["docId"] = std::to_string(i);
      ap.prims["buildDate"] = std::to_string(1000 + pick(rng, 9000));
      parts.push_back(ap.oid);
    }
    for (Oid ap : parts) {
      std::vector<Oid> conns;
      for (int k = 0; k < p.connectionsPerPart; ++k) {
        auto& c = w.add("Connection");
        c.singles["from"] = ap;
        c.singles["to"] = parts[pick(rng, parts.size())];
        c.prims["length"] = std::to_string(1 + pick(rng, 1000));
        conns.push_back(c.oid);
      }
      w.at(ap).collections["connections"] = conns;
    }
    auto& rec = w.at(cp);
    rec.singles["rootPart"] = parts.front();
    rec.singles["documentation"] = doc;
    rec.collections["parts"] = parts;
    pool.push_back(cp);
  }

  // Assembly hierarchy.
  int ids = 0;
  std::function<Oid(int, std::optional<Oid>)> assembly = [&](int level, std::optional<Oid> parent) -> Oid {
    const Oid ca = w.add(kCA).oid;
    w.at(ca).singles["module"] = module;
    w.at(ca).singles["superAssembly"] = parent;
    w.at(ca).prims["id"] = std::to_string(ids++);
    std::vector<Oid> subs, bases;
    for (int i = 0; i < p.fanout; ++i) {
      if (level + 1 < p.levels) {
        subs.push_back(assembly(level + 1, ca));
      } else {
        const Oid ba = w.add(kBA).oid;
        w.at(ba).singles["module"] = module;
        w.at(ba).singles["superAssembly"] = ca;
        w.at(ba).prims["id"] = std::to_string(ids++);
        std::vector<Oid> comps;
        for (int k = 0; k < p.componentsPerBase; ++k) comps.push_back(pool[pick(rng, pool.size())]);
        w.at(ba).collections["components"] = comps;
        bases.push_back(ba);
      }
    }
    w.at(ca).collections["subAssemblies"] = subs;
    w.at(ca).collections["baseAssemblies"] = bases;
    return ca;
  };
  const Oid root = assembly(1, std::nullopt);
  w.at(module).singles["designRoot"] = root;
  return w.take();
}

/// Composite parts in t1 visiting order, each once.
std::vector<Oid> oo7_reachable_composites(const DatasetIndex& idx) {
  std::vector<Oid> out;
  std::set<Oid> seen;
  std::function<void(Oid)> visit = [&](Oid ca) {
    const auto& rec = idx.at(ca);
    for (Oid sub : idx.many(rec, "subAssemblies")) visit(sub);
    for (Oid ba : idx.many(rec, "baseAssemblies"))
      for (Oid cp : idx.many(idx.at(ba), "components"))
        if (seen.insert(cp).second) out.push_back(cp);
  };
  const auto& module = idx.first_of("Module");
  if (auto root = idx.single(module, "designRoot")) visit(*root);
  return out;
}

WorkloadTrace oo7_trace(const std::string& name, const Dataset& ds) {
  DatasetIndex idx(ds);
  WorkloadTrace t;
  t.name = name;
  if (name == "t1") {
    t.steps.push_back({{"Module", "t1"}, idx.first_of("Module").oid});
    return t;
  }
  const auto composites = oo7_reachable_composites(idx);
  if (name == "t2a") {
    for (Oid cp : composites) t.steps.push_back({{kCP, "updateRootPart"}, cp});
    return t;
  }
  const std::string method = name == "t2b" ? "update" : "update4";
  for (Oid cp : composites)
    for (Oid ap : idx.many(idx.at(cp), "parts")) t.steps.push_back({{kAP, method}, ap});
  return t;
}

// ---------------------------------------------------------------- wordcount

ApplicationModel wordcount_model() {
  ApplicationModel m;
  TypeDecl coll{"TextCollection", true, {many("texts", "Text")}, {}};
  TypeDecl text{"Text", true, {many("chunks", "Chunk"), single("collection", "TextCollection"), prim("name", "string")}, {}};
  TypeDecl chunk{"Chunk", true, {single("text", "Text"), prim("words")}, {}};
  {
    MethodBuilder b("count");
    auto texts = b.get(kSelf, "TextCollection", "texts", "Text");
    b.loop("l1");
    auto t = b.elem(texts);
    b.call(t, "Text", "count");
    b.end();
    b.ret();
    coll.methods.push_back(b.build());
  }
  {
    MethodBuilder b("count");
    auto chunks = b.get(kSelf, "Text", "chunks", "Chunk");
    b.loop("l1");
    auto c = b.elem(chunks);
    b.get(c, "Chunk", "words", "int");
    b.end();
    b.ret();
    text.methods.push_back(b.build());
  }
  m.types = {coll, text, chunk};
  m.entryPoints = {{"TextCollection", "count"}};
  finish(m);
  return m;
}

Dataset wordcount_dataset(const BenchmarkSpec& spec) {
  require_positive(spec.files, "files");
  require_positive(spec.wordsTotal, "wordsTotal");
  require_positive(spec.chunksPerText, "chunksPerText");
  DatasetWriter w;
  const Oid root = w.add("TextCollection").oid;
  const std::int64_t chunks = static_cast<std::int64_t>(spec.files) * spec.chunksPerText;
  const std::int64_t base = spec.wordsTotal / chunks;
  std::int64_t extra = spec.wordsTotal % chunks;
  std::vector<Oid> texts;
  for (int f = 0; f < spec.files; ++f) {
    const Oid text = w.add("Text").oid;
    w.at(text).singles["collection"] = root;
    w.at(text).prims["name"] = "\"file" + std::to_string(f) + "\"";
    std::vector<Oid> list;
    for (int c = 0; c < spec.chunksPerText; ++c) {
      auto& ch = w.add("Chunk");
      ch.singles["text"] = text;
      ch.prims["words"] = std::to_string(base + (extra > 0 ? 1 : 0));
      if (extra > 0) --extra;
      list.push_back(ch.oid);
    }
    w.at(text).collections["chunks"] = list;
    texts.push_back(text);
  }
  w.at(root).collections["texts"] = texts;
  return w.take();
}

// ------------------------------------------------------------------- kmeans

ApplicationModel kmeans_model() {
  ApplicationModel m;
  TypeDecl km{"KMeans", true, {single("points", "VectorCollection"), single("centroids", "VectorCollection")}, {}};
  TypeDecl vc{"VectorCollection", true, {many("vectors", "Vector")}, {}};
  TypeDecl vec{"Vector", true, {prim("coords", "string")}, {}};
  {
    MethodBuilder b("iterate");
    auto pc = b.get(kSelf, "KMeans", "points", "VectorCollection");
    auto pv = b.get(pc, "VectorCollection", "vectors", "Vector");
    auto cc = b.get(kSelf, "KMeans", "centroids", "VectorCollection");
    auto cv = b.get(cc, "VectorCollection", "vectors", "Vector");
    b.loop("l1");
    auto p = b.elem(pv);
    b.get(p, "Vector", "coords", "string");
    b.loop("l2");
    auto c = b.elem(cv);
    b.get(c, "Vector", "coords", "string");
    b.end();
    b.end();
    b.loop("l3");
    auto c2 = b.elem(cv);
    b.put(c2, "Vector", "coords", "string");
    b.end();
    b.ret();
    km.methods.push_back(b.build());
  }
  m.types = {km, vc, vec};
  m.entryPoints = {{"KMeans", "iterate"}};
  finish(m);
  return m;
}

Dataset kmeans_dataset(const BenchmarkSpec& spec) {
  require_positive(spec.vectors, "vectors");
  require_positive(spec.clusters, "clusters");
  require_positive(spec.dims, "dims");
  require_positive(spec.iterations, "iterations");
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> coord(-100.0, 100.0);
  DatasetWriter w;
  const Oid km = w.add("KMeans").oid;
  const Oid points = w.add("VectorCollection").oid;
  const Oid centroids = w.add("VectorCollection").oid;
  auto vector = [&]() {
    auto& v = w.add("Vector");
    std::string text = "[";
    for (int d = 0; d < spec.dims; ++d) {
      if (d) text += ",";
      text += std::to_string(static_cast<int>(coord(rng)));
    }
    v.prims["coords"] = text + "]";
    return v.oid;
  };
  std::vector<Oid> pv, cv;
  for (int i = 0; i < spec.vectors; ++i) pv.push_back(vector());
  for (int i = 0; i < spec.clusters; ++i) cv.push_back(vector());
  w.at(points).collections["vectors"] = pv;
  w.at(centroids).collections["vectors"] = cv;
  w.at(km).singles["points"] = points;
  w.at(km).singles["centroids"] = centroids;
  return w.take();
}

WorkloadTrace kmeans_trace(const Dataset& ds, int iterations) {
  DatasetIndex idx(ds);
  WorkloadTrace t;
  t.name = "kmeans";
  const Oid root = idx.first_of("KMeans").oid;
  for (int i = 0; i < iterations; ++i) t.steps.push_back({{"KMeans", "iterate"}, root});
  return t;
}

// -------------------------------------------------------------------- graph

ApplicationModel graph_model() {
  ApplicationModel m;
  TypeDecl graph{"Graph", true, {many("vertices", "Vertex")}, {}};
  TypeDecl vertex{"Vertex", true, {many("edges", "WeightedEdge"), prim("id"), prim("dist")}, {}};
  TypeDecl edge{"WeightedEdge",
                true,
                {single("from", "Vertex"), single("to", "Vertex"), prim("weight"), prim("toId")},
                {}};
  {
    MethodBuilder b("visit");
    b.get(kSelf, "Vertex", "dist", "int");
    auto edges = b.get(kSelf, "Vertex", "edges", "WeightedEdge");
    b.loop("l1");
    auto e = b.elem(edges);
    auto to = b.get(e, "WeightedEdge", "to", "Vertex");
    b.get(to, "Vertex", "id", "int");
    b.end();
    b.ret();
    vertex.methods.push_back(b.build());
  }
  {
    MethodBuilder b("relax");
    auto from = b.get(kSelf, "WeightedEdge", "from", "Vertex");
    b.get(from, "Vertex", "dist", "int");
    b.get(kSelf, "WeightedEdge", "weight", "int");
    auto to = b.get(kSelf, "WeightedEdge", "to", "Vertex");
    b.get(to, "Vertex", "dist", "int");
    b.put(to, "Vertex", "dist", "int");
    b.ret();
    edge.methods.push_back(b.build());
  }
  m.types = {graph, vertex, edge};
  m.entryPoints = {{"Vertex", "visit"}, {"WeightedEdge", "relax"}};
  finish(m);
  return m;
}

Dataset graph_dataset(const BenchmarkSpec& spec) {
  require_positive(spec.vertices, "vertices");
  require_positive(spec.edges, "edges");
  if (spec.vertices < 2) throw SpecError("graph needs at least 2 vertices");
  std::mt19937_64 rng(spec.seed);
  DatasetWriter w;
  const Oid g = w.add("Graph").oid;
  std::vector<Oid> vertices;
  for (int i = 0; i < spec.vertices; ++i) {
    auto& v = w.add("Vertex");
    v.prims["id"] = std::to_string(i);
    v.prims["dist"] = "1000000000";
    vertices.push_back(v.oid);
  }
  std::vector<std::vector<Oid>> out(vertices.size());
  const auto n = vertices.size();
  for (int i = 0; i < spec.edges; ++i) {
    const std::size_t a = pick(rng, n);
    std::size_t b = pick(rng, n - 1);
    if (b >= a) ++b;
    auto& e = w.add("WeightedEdge");
    e.singles["from"] = vertices[a];
    e.singles["to"] = vertices[b];
    e.prims["weight"] = std::to_string(1 + pick(rng, 100));
    e.prims["toId"] = std::to_string(b);
    out[a].push_back(e.oid);
  }
  for (std::size_t i = 0; i < n; ++i) w.at(vertices[i]).collections["edges"] = out[i];
  w.at(g).collections["vertices"] = vertices;
  return w.take();
}

WorkloadTrace graph_trace(const std::string& name, const Dataset& ds) {
  DatasetIndex idx(ds);
  const auto& graph = idx.first_of("Graph");
  const auto& vertices = idx.many(graph, "vertices");
  WorkloadTrace t;
  t.name = name;
  if (vertices.empty()) return t;
  std::unordered_map<Oid, std::size_t> pos;
  for (std::size_t i = 0; i < vertices.size(); ++i) pos[vertices[i]] = i;
  auto target = [&](Oid e) { return *idx.single(idx.at(e), "to"); };

  if (name == "dfs") {
    std::vector<bool> seen(vertices.size(), false);
    std::vector<Oid> stack{vertices.front()};
    while (!stack.empty()) {
      const Oid v = stack.back();
      stack.pop_back();
      if (seen[pos[v]]) continue;
      seen[pos[v]] = true;
      t.steps.push_back({{"Vertex", "visit"}, v});
      const auto& edges = idx.many(idx.at(v), "edges");
      for (auto it = edges.rbegin(); it != edges.rend(); ++it)
        if (!seen[pos[target(*it)]]) stack.push_back(target(*it));
    }
    return t;
  }

  // Queue-based relaxation order from vertex 0; capped so it stays linear.
  const std::size_t cap = 4 * vertices.size();
  std::vector<std::int64_t> dist(vertices.size(), std::numeric_limits<std::int64_t>::max());
  std::vector<bool> queued(vertices.size(), false);
  std::deque<std::size_t> queue{0};
  dist[0] = 0;
  queued[0] = true;
  while (!queue.empty() && t.steps.size() < cap) {
    const std::size_t u = queue.front();
    queue.pop_front();
    queued[u] = false;
    for (Oid e : idx.many(idx.at(vertices[u]), "edges")) {
      if (t.steps.size() >= cap) break;
      t.steps.push_back({{"WeightedEdge", "relax"}, e});
      const auto& rec = idx.at(e);
      const std::size_t v = pos[target(e)];
      const std::int64_t w = std::stoll(rec.prims.at("weight"));
      if (dist[u] + w < dist[v]) {
        dist[v] = dist[u] + w;
        if (!queued[v]) {
          queued[v] = true;
          queue.push_back(v);
        }
      }
    }
  }
  return t;
}

}  // namespace

// ----------------------------------------------------------------- public api

Oo7Params oo7_size(const std::string& size) {
  if (size == "small") return {3, 3, 3, 50, 5, 3};
  if (size == "medium") return {4, 3, 3, 500, 11, 4};
  if (size == "large-scaled") return {5, 3, 3, 900, 11, 4};
  throw SpecError("unknown oo7 size '" + size + "' (small, medium, large-scaled)");
}

ApplicationModel benchmark_model(const std::string& family) {
  if (family == "bank") return bank_model();
  if (family == "oo7") return oo7_model();
  if (family == "wordcount") return wordcount_model();
  if (family == "kmeans") return kmeans_model();
  if (family == "graph") return graph_model();
  throw SpecError("unknown benchmark family '" + family + "'");
}

std::vector<std::string> traversal_names(const std::string& family) {
  if (family == "bank") return {"setAllTransCustomers"};
  if (family == "oo7") return {"t1", "t2a", "t2b", "t2c"};
  if (family == "wordcount") return {"wordcount"};
  if (family == "kmeans") return {"kmeans"};
  if (family == "graph") return {"dfs", "bellman-ford"};
  throw SpecError("unknown benchmark family '" + family + "'");
}

WorkloadTrace trace_for(const std::string& family, const std::string& traversal, const Dataset& dataset,
                        std::uint64_t seed) {
  const auto names = traversal_names(family);
  if (std::find(names.begin(), names.end(), traversal) == names.end())
    throw SpecError("family '" + family + "' has no traversal '" + traversal + "'");
  WorkloadTrace t;
  if (family == "bank") {
    DatasetIndex idx(dataset);
    t.name = traversal;
    t.steps.push_back({{"BankManagement", "setAllTransCustomers"}, idx.first_of("BankManagement").oid});
  } else if (family == "oo7") {
    t = oo7_trace(traversal, dataset);
  } else if (family == "wordcount") {
    DatasetIndex idx(dataset);
    t.name = traversal;
    t.steps.push_back({{"TextCollection", "count"}, idx.first_of("TextCollection").oid});
  } else if (family == "kmeans") {
    t = kmeans_trace(dataset, 2);
  } else {
    t = graph_trace(traversal, dataset);
  }
  t.branchOracle.mode = BranchOracleSpec::Mode::probability;
  t.branchOracle.p = 0.5;
  (void)seed;  // traces are fixed by the data; branches are seeded at run time
  return t;
}

Benchmark generate(const BenchmarkSpec& spec) {
  Benchmark b;
  b.model = benchmark_model(spec.family);
  if (spec.family == "bank") {
    b.dataset = bank_dataset(spec);
  } else if (spec.family == "oo7") {
    b.dataset = oo7_dataset(spec.oo7 ? *spec.oo7 : oo7_size(spec.size), spec.seed);
  } else if (spec.family == "wordcount") {
    b.dataset = wordcount_dataset(spec);
  } else if (spec.family == "kmeans") {
    b.dataset = kmeans_dataset(spec);
  } else {
    b.dataset = graph_dataset(spec);
  }
  for (const auto& name : traversal_names(spec.family)) {
    WorkloadTrace t = spec.family == "kmeans" ? kmeans_trace(b.dataset, spec.iterations)
                                              : trace_for(spec.family, name, b.dataset, spec.seed);
    b.traces.emplace(name, std::move(t));
  }
  return b;
}

}  // namespace caprelab
