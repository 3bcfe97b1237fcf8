#pragma once

// Structured interpreter for IR method bodies over a StoreState. Shared by the
// simulator (timing through hooks) and the path oracle (value tagging).

#include <cstdint>
#include <map>
#include <set>
#include <tuple>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "caprelab/simulator.hpp"

namespace caprelab::detail {

enum class FieldClass { none, single, collection, prim };

struct CInstr {
  InstrKind kind = InstrKind::noop;
  int ii = 0;
  int def = -1;
  std::vector<int> uses;
  int ownerLayout = -1;
  int fieldSlot = -1;
  FieldClass fieldClass = FieldClass::none;
  std::string fieldName;
  int callee = -1;
  std::string branchId;
  int loopRegion = -1;  // innermost enclosing loop region (arrayload)
};

struct Region {
  enum class Kind { block, loop, branch };
  Kind kind = Kind::block;
  std::string id;
  std::vector<std::pair<bool, int>> items;  // (is region, index)
  int driver = -1;                          // loop: driving arrayload
  std::vector<std::string> arms;            // branch: arm names in decision order
  std::vector<int> armRegions;              // branch: region per arm, -1 when empty
};

struct CompiledMethod {
  MethodRef ref;
  std::string name;  // "Owner.method"
  int ownerLayout = -1;
  int numSlots = 0;
  int numParams = 0;
  std::vector<CInstr> instrs;
  std::vector<Region> regions;
  int body = 0;
  std::unordered_map<std::string, std::vector<std::string>> branchArms;
};

struct CompiledProgram {
  std::vector<CompiledMethod> methods;
  std::map<MethodRef, int> index;
  int find(const MethodRef& ref) const;
};

CompiledProgram compile_program(const ApplicationModel& model, const StoreState& store);

class InterpreterHooks {
 public:
  virtual ~InterpreterHooks() = default;
  virtual void on_enter(int /*method*/, int /*self*/) {}
  virtual void on_exit(int /*method*/) {}
  virtual void on_access(int /*obj*/) {}
};

/// Interned receiver-rooted paths for the oracle.
class PathTable {
 public:
  PathTable();
  int child(int parent, const std::string& field, Cardinality c);
  FieldPath path(int id) const;

 private:
  struct Entry {
    int parent;
    PathStep step;
  };
  std::vector<Entry> entries_;
  std::map<std::tuple<int, std::string, Cardinality>, int> index_;
};

class BranchOracle {
 public:
  BranchOracle(const BranchOracleSpec& spec, std::uint64_t seed);
  void begin_step(std::size_t step);
  std::size_t decide(const std::vector<std::string>& arms);

 private:
  BranchOracleSpec spec_;
  std::mt19937_64 rng_;
  std::size_t step_ = 0;
  std::size_t cursor_ = 0;
};

struct InterpreterOptions {
  bool trackPaths = false;
  bool keepReadLog = false;
  int maxCallDepth = 4096;
};

class Interpreter {
 public:
  Interpreter(const CompiledProgram& program, StoreState& store, BranchOracle& oracle, InterpreterHooks& hooks,
              InterpreterOptions options);

  /// Executes one trace step: demand access on the root, then the call.
  void run_step(const TraceStep& step, std::size_t index);

  std::uint64_t read_digest() const { return digest_; }
  std::uint64_t read_count() const { return reads_; }
  std::vector<std::string>& read_log() { return log_; }
  /// Oracle output: per method index, interned path ids.
  const std::vector<std::set<int>>& method_paths() const { return methodPaths_; }
  const PathTable& paths() const { return pathTable_; }
  const std::vector<bool>& executed() const { return executed_; }

 private:
  struct Tag {
    int depth;
    std::uint64_t activation;
    int method;
    int path;
  };
  struct Value {
    enum class Kind { undef, null, object, collection, prim };
    Kind kind = Kind::undef;
    int obj = -1;
    int slot = -1;  // collection slot on obj
    std::string prim;
    std::vector<Tag> tags;
    static Value make(Kind k) {
      Value v;
      v.kind = k;
      return v;
    }
  };
  struct Frame {
    const CompiledMethod* method = nullptr;
    std::vector<Value> slots;
    std::vector<int> loopIter;
    std::unordered_map<std::string, std::size_t> decisions;
    Value ret;
  };
  enum class Flow { normal, brk, cont, ret };

  Value call(int method, Value receiver, std::vector<Value> args, int depth);
  Flow exec_region(Frame& f, int region, int depth);
  Flow exec_instr(Frame& f, const CInstr& in, int depth);
  std::size_t decide(Frame& f, const std::string& branchId);
  Value navigate(const Value& from, const std::string& field, Cardinality c, Value out);
  void record(const std::string& text);
  [[noreturn]] void fail(const Frame& f, const CInstr& in, const std::string& what) const;

  const CompiledProgram& program_;
  StoreState& store_;
  BranchOracle& oracle_;
  InterpreterHooks& hooks_;
  InterpreterOptions options_;
  std::uint64_t digest_ = 1469598103934665603ULL;
  std::uint64_t reads_ = 0;
  std::vector<std::string> log_;
  PathTable pathTable_;
  std::vector<std::set<int>> methodPaths_;
  std::vector<bool> executed_;
  std::vector<std::uint64_t> activeStack_;  // activation id per depth
  std::uint64_t nextActivation_ = 1;
};

}  // namespace caprelab::detail
