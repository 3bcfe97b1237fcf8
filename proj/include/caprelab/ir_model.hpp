#pragma once

// Application description: declared types, persistent fields and methods
// whose bodies are IR instruction streams annotated with syntactic scopes.

#include <compare>
#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "caprelab/error.hpp"

namespace caprelab {

enum class Cardinality { single, collection };

std::string_view to_string(Cardinality c);

/// Receiver slot of every method body.
inline constexpr std::string_view kSelfVar = "v_self";

/// "p0", "p1", ... for parameter slots.
std::string param_var(std::size_t index);
/// Parameter index of a slot name, or nullopt when the name is not a slot.
std::optional<std::size_t> param_index(std::string_view var);

/// True for the primitive tags accepted as field, parameter and return types.
bool is_primitive(std::string_view type);

enum class InstrKind {
  getfield,
  putfield,
  arrayload,
  invokemethod,
  conditionalbranch,
  goto_,
  return_,
  break_,
  continue_,
  noop,
};

std::string_view to_string(InstrKind k);
std::optional<InstrKind> instr_kind_from_string(std::string_view s);

enum class ScopeKind { loop, branch };

struct ScopeFrame {
  ScopeKind kind = ScopeKind::loop;
  std::string id;
  /// Arm of the conditional for branch frames.
  std::optional<std::string> arm;

  friend bool operator==(const ScopeFrame&, const ScopeFrame&) = default;
};

/// Kind-specific instruction parameters. Unused members stay empty.
struct InstrParams {
  std::string ownerType;   // getfield, putfield, invokemethod
  std::string fieldName;   // getfield, putfield
  std::string fieldType;   // getfield, putfield
  std::string methodName;  // invokemethod
  std::string branchId;    // conditionalbranch deciding a branch frame
  std::vector<std::string> arms;
  std::optional<int> target;  // jump target (goto, loop-control branches)

  friend bool operator==(const InstrParams&, const InstrParams&) = default;
};

struct IrInstruction {
  int ii = 0;
  InstrKind kind = InstrKind::noop;
  InstrParams params;
  std::optional<std::string> defVar;
  std::vector<std::string> usedVars;
  std::vector<ScopeFrame> scopeChain;  // outermost first
  std::string note;                    // free text, ignored by analysis

  bool in_loop() const;
  bool in_branch() const;

  friend bool operator==(const IrInstruction&, const IrInstruction&) = default;
};

struct FieldDecl {
  std::string name;
  std::string targetType;
  Cardinality cardinality = Cardinality::single;

  friend bool operator==(const FieldDecl&, const FieldDecl&) = default;
};

struct ParamDecl {
  std::string name;
  std::string type;

  friend bool operator==(const ParamDecl&, const ParamDecl&) = default;
};

struct MethodDecl {
  std::string name;
  std::vector<ParamDecl> params;
  std::string returnType = "void";
  std::vector<IrInstruction> instructions;
  std::optional<std::string> overridesMethodOf;

  friend bool operator==(const MethodDecl&, const MethodDecl&) = default;
};

struct TypeDecl {
  std::string name;
  bool persistent = true;
  std::vector<FieldDecl> fields;
  std::vector<MethodDecl> methods;

  const FieldDecl* find_field(std::string_view field) const;
  const MethodDecl* find_method(std::string_view method) const;

  friend bool operator==(const TypeDecl&, const TypeDecl&) = default;
};

/// owner.method
struct MethodRef {
  std::string owner;
  std::string method;

  std::string str() const { return owner + "." + method; }
  /// Splits at the last '.'; throws ParseError when there is none.
  static MethodRef parse(std::string_view text);

  friend auto operator<=>(const MethodRef&, const MethodRef&) = default;
  friend bool operator==(const MethodRef&, const MethodRef&) = default;
};

struct MethodRefHash {
  std::size_t operator()(const MethodRef& r) const noexcept {
    const std::size_t h = std::hash<std::string>{}(r.owner);
    return h ^ (std::hash<std::string>{}(r.method) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2));
  }
};

class ApplicationModel {
 public:
  std::vector<TypeDecl> types;
  std::vector<MethodRef> entryPoints;

  /// Rebuilds the name index. Call after mutating `types`.
  void reindex();

  const TypeDecl* find_type(std::string_view name) const;
  const MethodDecl* find_method(const MethodRef& ref) const;
  bool is_declared_type(std::string_view name) const { return find_type(name) != nullptr; }
  bool is_persistent_type(std::string_view name) const;

  /// A method is overridden when another type declares a method of the same
  /// name tagged `overridesMethodOf` = the method's owner.
  bool is_overridden(const MethodRef& ref) const;

  /// Every declared method, in declaration order.
  std::vector<MethodRef> all_methods() const;

  std::size_t instruction_count() const;

  friend bool operator==(const ApplicationModel& a, const ApplicationModel& b) {
    return a.types == b.types && a.entryPoints == b.entryPoints;
  }

 private:
  std::unordered_map<std::string, std::size_t> index_;
  std::unordered_map<std::string, bool> overridden_;  // key "owner.method"
  std::unordered_map<std::string, std::pair<std::size_t, std::size_t>> methods_;  // key "owner.method"
};

/// Branch-dependence of a single instruction: inside a conditional arm, or a
/// return/break/continue nested in a loop.
bool is_branch_dependent(const IrInstruction& instr);

struct Violation {
  std::string code;
  std::string location;  // "Type", "Type.method" or "Type.method@ii"
  std::string message;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct ValidationReport {
  std::vector<Violation> violations;

  bool ok() const { return violations.empty(); }
  /// One JSON object per line.
  std::string to_json_lines() const;
};

ValidationReport validate_model(const ApplicationModel& model);

/// Rewrites library spellings into the canonical instruction set: the
/// Iterator protocol (iterator()/hasNext()/next()) becomes arrayload on the
/// underlying collection variable and other `java/` calls become noop.
void normalize_method(MethodDecl& method);

}  // namespace caprelab
