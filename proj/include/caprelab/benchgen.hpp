#pragma once

// Workload generators: bank example, OO7-like, wordcount-like, k-means-like
// and weighted-graph families, each emitted as model + dataset + traces.

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "caprelab/ir_model.hpp"
#include "caprelab/simulator.hpp"

namespace caprelab {

/// Small helper for writing IR method bodies by hand.
class MethodBuilder {
 public:
  explicit MethodBuilder(std::string name);

  MethodBuilder& param(std::string name, std::string type);
  MethodBuilder& returns(std::string type);
  MethodBuilder& overrides(std::string type);

  /// getfield; returns the defined variable.
  std::string get(const std::string& base, const std::string& owner, const std::string& field,
                  const std::string& fieldType);
  void put(const std::string& base, const std::string& owner, const std::string& field, const std::string& fieldType,
           const std::optional<std::string>& value = std::nullopt);
  /// arrayload of the current loop's element.
  std::string elem(const std::string& collection);
  /// invokemethod; defines a variable when `defines` is set.
  std::optional<std::string> call(const std::string& receiver, const std::string& owner, const std::string& method,
                                  const std::vector<std::string>& args = {}, bool defines = false);
  void cond(const std::string& branchId, std::vector<std::string> arms, std::vector<std::string> uses = {});
  void ret(const std::optional<std::string>& var = std::nullopt);
  void brk();
  void noop(std::string note);

  void loop(const std::string& id);
  void arm(const std::string& branchId, const std::string& armName);
  void end();

  MethodDecl build() const;

 private:
  IrInstruction& emit(InstrKind kind);
  std::string fresh();

  MethodDecl m_;
  std::vector<ScopeFrame> scope_;
  int nextVar_ = 1;
};

struct Oo7Params {
  int levels = 3;             // assembly levels, base assemblies on the last
  int fanout = 3;             // children per complex assembly
  int componentsPerBase = 3;  // composite parts per base assembly
  int poolSize = 50;          // composite parts in the library
  int partsPerComposite = 5;
  int connectionsPerPart = 3;
};

/// Fan-out defaults for "small", "medium" and "large-scaled".
Oo7Params oo7_size(const std::string& size);

struct BenchmarkSpec {
  std::string family = "bank";  // bank, oo7, wordcount, kmeans, graph
  std::uint64_t seed = 42;
  // bank
  int transactions = 100;
  // oo7
  std::string size = "small";
  std::optional<Oo7Params> oo7;  // overrides `size`
  // wordcount
  int files = 10;
  std::int64_t wordsTotal = 100000;
  int chunksPerText = 10;
  // kmeans
  int vectors = 1000;
  int clusters = 4;
  int dims = 2;
  int iterations = 2;
  // graph
  int vertices = 100;
  int edges = 1000;
};

struct Benchmark {
  ApplicationModel model;
  Dataset dataset;
  std::map<std::string, WorkloadTrace> traces;
};

/// Throws SpecError on unknown families or non-positive sizes.
Benchmark generate(const BenchmarkSpec& spec);

/// Model of a family without data.
ApplicationModel benchmark_model(const std::string& family);

/// Traversal names per family.
std::vector<std::string> traversal_names(const std::string& family);

/// Throws SpecError for traversals the family does not provide.
WorkloadTrace trace_for(const std::string& family, const std::string& traversal, const Dataset& dataset,
                        std::uint64_t seed);

}  // namespace caprelab
