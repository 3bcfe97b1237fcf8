#include <functional>

#include "caprelab/benchgen.hpp"
#include "caprelab/error.hpp"
#include "caprelab/hints.hpp"
#include "caprelab/model_io.hpp"
#include "doctest.h"
#include "support/random_model.hpp"

using namespace caprelab;

namespace {

const std::string kFixtures = CAPRELAB_FIXTURES;

ApplicationModel bank() { return parse_application(kFixtures + "/bank.app.json"); }

std::set<std::string> strs(const HintSet& hs) {
  auto v = hs.strings(false);
  return {v.begin(), v.end()};
}

HintSet make_set(const MethodRef& ref, std::initializer_list<const char*> paths) {
  HintSet hs;
  hs.methodRef = ref;
  for (const char* p : paths) hs.add(ref.owner, parse_path(p));
  return hs;
}

// C.m reads `leaf`; P.run and Q.run both call it through their `c` field.
ApplicationModel two_callers() {
  ApplicationModel m;
  TypeDecl leaf, c, p, q;
  leaf.name = "L";
  c.name = "C";
  c.fields = {{"leaf", "L", Cardinality::single}};
  {
    MethodBuilder b("m");
    b.get(std::string(kSelfVar), "C", "leaf", "L");
    b.ret();
    c.methods.push_back(b.build());
  }
  for (TypeDecl* t : {&p, &q}) {
    t->name = t == &p ? "P" : "Q";
    t->fields = {{"c", "C", Cardinality::single}};
    MethodBuilder b("run");
    const std::string v = b.get(std::string(kSelfVar), t->name, "c", "C");
    b.call(v, "C", "m");
    b.ret();
    t->methods.push_back(b.build());
  }
  m.types = {leaf, c, p, q};
  m.entryPoints = {{"P", "run"}, {"Q", "run"}};
  m.reindex();
  return m;
}

// Independent walk check: every hint follows type-graph associations with
// matching cardinality, starting at the method's owner.
bool walks(const ApplicationModel& m, const MethodRef& ref, const FieldPath& path) {
  std::string type = ref.owner;
  for (const auto& step : path) {
    const TypeDecl* t = m.find_type(type);
    if (!t) return false;
    const FieldDecl* f = t->find_field(step.field);
    if (!f || !m.is_persistent_type(f->targetType) || f->cardinality != step.cardinality) return false;
    type = f->targetType;
  }
  return !path.empty();
}

}  // namespace

TEST_CASE("hints of setAllTransCustomers") {
  const ApplicationModel m = bank();
  GraphCache cache(m);
  const HintSet hs = generate_hints(cache.augmented({"BankManagement", "setAllTransCustomers"}));
  CHECK(strs(hs) == std::set<std::string>{"transactions.type", "transactions.emp", "transactions.account.cust.company",
                                          "manager.company"});
  CHECK(hs.strings(true)[1] == "transactions@collection.account.cust.company");
  const auto closure = prefix_closure(hs);
  CHECK(closure.size() == 8);
  CHECK(closure.contains(parse_path("transactions@collection.account")));
}

TEST_CASE("root-only graph yields no hints") {
  AugmentedTypeGraph ag;
  NavNode root;
  root.id = 0;
  root.typeName = "A";
  ag.nodes.push_back(root);
  ag.adjacency.resize(1);
  CHECK(generate_hints(ag).empty());
}

TEST_CASE("hints of getAccount") {
  const ApplicationModel m = bank();
  GraphCache cache(m);
  // Branch-dependent navigations are kept: both arms are assumed.
  CHECK(strs(generate_hints(cache.augmented({"Transaction", "getAccount"}))) ==
        std::set<std::string>{"type", "emp.dept", "account"});
}

TEST_CASE("dedup on the bank model") {
  const ApplicationModel m = bank();
  const HintMap d = analyze_hints(m);
  CHECK(strs(d.at({"Transaction", "getAccount"})) == std::set<std::string>{"emp.dept"});
  CHECK(d.at({"Account", "setCustomer"}).empty());
  CHECK(strs(d.at({"BankManagement", "setAllTransCustomers"})).size() == 4);
}

TEST_CASE("a callee hint carried by its only caller is removed") {
  const ApplicationModel m = bank();
  GraphCache cache(m);
  const CallGraph cg = build_call_graph(cache);
  HintMap all = generate_all_hints(cache);
  const MethodRef getAccount{"Transaction", "getAccount"};
  all[getAccount] = make_set(getAccount, {"account.cust.company"});
  CHECK(dedup_hints(all, cg).at(getAccount).empty());
}

TEST_CASE("dedup requires every caller to carry the hint") {
  const ApplicationModel m = two_callers();
  GraphCache cache(m);
  const CallGraph cg = build_call_graph(cache);
  const MethodRef callee{"C", "m"};
  CHECK(cg.callers.at(callee).size() == 2);
  HintMap all = generate_all_hints(cache);
  CHECK(strs(all.at({"P", "run"})) == std::set<std::string>{"c.leaf"});
  CHECK(dedup_hints(all, cg).at(callee).empty());

  all[{"Q", "run"}] = make_set({"Q", "run"}, {"c"});
  CHECK(strs(dedup_hints(all, cg).at(callee)) == std::set<std::string>{"leaf"});
}

TEST_CASE("entry points and uncalled methods keep their hints") {
  const ApplicationModel m = two_callers();
  GraphCache cache(m);
  const HintMap all = generate_all_hints(cache);
  const CallGraph cg = build_call_graph(cache, {{"C", "m"}});
  const HintMap d = dedup_hints(all, cg);
  CHECK(d.at({"C", "m"}) == all.at({"C", "m"}));
  CHECK(d.at({"P", "run"}) == all.at({"P", "run"}));
  CHECK(d.at({"Q", "run"}) == all.at({"Q", "run"}));
}

TEST_CASE("dedup is idempotent in both modes") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    testing::RandomModelOptions o;
    o.branches = true;
    const ApplicationModel m = testing::random_case(seed, o).model;
    GraphCache cache(m);
    const HintMap all = generate_all_hints(cache);
    const CallGraph cg = build_call_graph(cache);
    for (auto mode : {DedupMode::single, DedupMode::transitive}) {
      const HintMap once = dedup_hints(all, cg, mode);
      CHECK(dedup_hints(once, cg, mode) == once);
      for (const auto& [ref, hs] : once)
        for (const auto& h : hs.hints) CHECK(all.at(ref).contains(h.path));
    }
  }
}

TEST_CASE("referenced-objects baseline on the bank model") {
  const AppTypeGraph g = build_app_type_graph(bank());
  CHECK(strs(rop_hints("Transaction", 1, g)) == std::set<std::string>{"type", "account", "emp"});
  CHECK(strs(rop_hints("Transaction", 2, g)) == std::set<std::string>{"type", "account.cust", "emp.dept"});
  // Collections are never followed.
  CHECK(strs(rop_hints("BankManagement", 3, g)) == std::set<std::string>{"manager.company"});
  CHECK_THROWS_AS(rop_hints("Ledger", 1, g), UnknownType);
  CHECK_THROWS_AS(rop_hints("Transaction", 0, g), HintError);
}

TEST_CASE("baseline on a type with only collection fields is empty") {
  ApplicationModel m;
  TypeDecl bag, item;
  item.name = "Item";
  bag.name = "Bag";
  bag.fields = {{"items", "Item", Cardinality::collection}};
  m.types = {bag, item};
  m.reindex();
  const AppTypeGraph g = build_app_type_graph(m);
  for (int d : {1, 2, 5, 10}) CHECK(rop_hints("Bag", d, g).empty());
}

TEST_CASE("baseline stagnates by the number of types") {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const ApplicationModel m = testing::random_case(seed).model;
    const AppTypeGraph g = build_app_type_graph(m);
    const int n = static_cast<int>(m.types.size());
    for (const auto& t : m.types) {
      const HintSet at = rop_hints(t.name, n, g);
      for (int d : {n + 1, n + 3, 2 * n + 10}) CHECK(rop_hints(t.name, d, g).hints == at.hints);
      for (const auto& h : at.hints) {
        CHECK(walks(m, {t.name, "x"}, h.path));
        CHECK(static_cast<int>(h.path.size()) <= n);
      }
      // Depth grows monotonically in coverage.
      for (int d = 1; d < n; ++d) {
        const auto a = prefix_closure(rop_hints(t.name, d, g));
        const auto b = prefix_closure(rop_hints(t.name, d + 1, g));
        CHECK(std::includes(b.begin(), b.end(), a.begin(), a.end()));
      }
    }
  }
}

TEST_CASE("generated hints walk the type graph") {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    testing::RandomModelOptions o;
    o.branches = true;
    o.puts = true;
    const ApplicationModel m = testing::random_case(seed, o).model;
    GraphCache cache(m);
    const HintMap all = generate_all_hints(cache);
    CHECK_NOTHROW(check_hint_paths(all, m, cache.type_graph()));
    for (const auto& [ref, hs] : all) {
      for (const auto& h : hs.hints) CHECK(walks(m, ref, h.path));
      // Stored paths are maximal: none is a prefix of another.
      for (const auto& a : hs.hints)
        for (const auto& b : hs.hints)
          if (&a != &b)
            CHECK_FALSE((a.path.size() <= b.path.size() && std::equal(a.path.begin(), a.path.end(), b.path.begin())));
    }
  }
}

TEST_CASE("hint file round trip") {
  const ApplicationModel m = bank();
  AnalysisOptions raw;
  raw.dedup = false;
  const HintMap d = analyze_hints(m, raw);
  const std::string text = hints_to_json(d);
  CHECK(hints_from_json_text(text, m) == d);
}

TEST_CASE("invalid hint files") {
  const ApplicationModel m = bank();
  CHECK_THROWS_AS(hints_from_json_text(R"({"Transaction.getAccount": ["account.manager"]})", m), HintError);
  CHECK_THROWS_AS(hints_from_json_text(R"({"Transaction.getAccount": ["emp@collection"]})", m), HintError);
  CHECK_THROWS_AS(hints_from_json_text(R"({"Transaction.audit": []})", m), HintError);
  CHECK_THROWS_AS(hints_from_json_text(R"({"Transaction.getAccount": "type"})", m), HintError);
  CHECK_THROWS_AS(hints_from_json_text(R"({"Transaction.getAccount": ["a..b"]})", m), HintError);
  CHECK_THROWS_AS(hints_from_json_text("[1, 2", m), HintError);
  CHECK_THROWS_AS(load_hints(kFixtures + "/missing.hints.json", m), HintError);
}

TEST_CASE("path text format") {
  const FieldPath p = parse_path("transactions@collection.account");
  REQUIRE(p.size() == 2);
  CHECK(p[0].cardinality == Cardinality::collection);
  CHECK(p[1].cardinality == Cardinality::single);
  CHECK(format_path(p) == "transactions@collection.account");
  CHECK(format_path(p, false) == "transactions.account");
}
