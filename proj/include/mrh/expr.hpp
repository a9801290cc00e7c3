#pragma once

#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "mrh/util.hpp"

// Jobs are expression trees evaluated by the engine. Trees are immutable and
// shared; a mutation produces a new tree that reuses every untouched subtree.

namespace mrh::jobs {

enum class BinOp {
  add, sub, mul, div,              // arithmetic
  lt, le, gt, ge, eq, ne,          // relational
  land, lor,                       // logical
};

enum class OpClass { arithmetic, relational, logical };

OpClass op_class(BinOp op);
std::string op_name(BinOp op);
std::optional<BinOp> op_from_name(const std::string& name);
// All operators sharing op_class(op), excluding op itself.
std::vector<BinOp> class_peers(BinOp op);

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  enum class Kind {
    constant,   // value
    variable,   // name
    lnot,       // kids[0]
    binary,     // op, kids[0], kids[1]
    cond,       // kids[0] ? kids[1] : kids[2]
    emit,       // kids[0]=key, kids[1]=value; yields unit
    seq,        // kids...; value of last (unit if empty)
    let,        // name, kids[0]=value, kids[1]=body
    foreach,    // name, kids[0]=list, kids[1]=body; yields unit
    call,       // name=builtin, kids=args
  };

  Kind kind;
  json value;         // constant
  std::string name;   // variable / let / foreach binder / builtin name
  BinOp op{};
  std::vector<ExprPtr> kids;
};

ExprPtr constant(json v);
ExprPtr var(std::string name);
ExprPtr lnot(ExprPtr e);
ExprPtr bin(BinOp op, ExprPtr l, ExprPtr r);
ExprPtr cond(ExprPtr c, ExprPtr t, ExprPtr f);
ExprPtr emit(ExprPtr key, ExprPtr val);
ExprPtr seq(std::vector<ExprPtr> kids);
ExprPtr let(std::string name, ExprPtr value, ExprPtr body);
ExprPtr foreach(std::string name, ExprPtr list, ExprPtr body);
ExprPtr call(std::string fn, std::vector<ExprPtr> args);

// ---- static types -----------------------------------------------------

struct Type {
  enum class Kind { num, boolean, str, arr, unit };
  Kind kind{Kind::unit};
  Kind elem{Kind::unit};  // element kind when kind == arr

  static Type num() { return {Kind::num, Kind::unit}; }
  static Type boolean() { return {Kind::boolean, Kind::unit}; }
  static Type str() { return {Kind::str, Kind::unit}; }
  static Type arr(Kind e) { return {Kind::arr, e}; }
  static Type unit() { return {Kind::unit, Kind::unit}; }
  bool operator==(const Type&) const = default;
};

std::string type_name(const Type& t);

using TypeEnv = std::map<std::string, Type>;

// Returns an error description, or nullopt when the tree is well typed in
// `env`. Checks the whole tree; evaluation assumes a prior successful check
// but still guards the hazards types cannot see (divide by zero, overflow).
std::optional<std::string> typecheck(const ExprPtr& e, const TypeEnv& env);

// ---- evaluation -------------------------------------------------------

// Raised for runtime faults: division by zero, integer overflow, a
// non-finite result, or a value whose runtime shape defeats the checker.
struct EvalFault : std::runtime_error {
  using std::runtime_error::runtime_error;
};

using Bindings = std::map<std::string, json>;
using EmitSink = std::vector<std::pair<json, json>>;

json eval(const ExprPtr& e, const Bindings& env, EmitSink& out);

// ---- serialization & surgery ------------------------------------------

json expr_to_json(const ExprPtr& e);
bool same_tree(const ExprPtr& a, const ExprPtr& b);
// Number of positions at which the trees differ (structure or payload
// differences count the whole divergent subtree as one position).
int diff_count(const ExprPtr& a, const ExprPtr& b);

// Path = child indices from the root. node_at throws std::out_of_range for
// a dangling path; replace_op requires the target to be a binary node.
using Path = std::vector<int>;
ExprPtr node_at(const ExprPtr& root, const Path& path);
ExprPtr replace_op(const ExprPtr& root, const Path& path, BinOp op);

struct OpSite {
  Path path;
  BinOp op;
};
// Every binary-operator position, in preorder.
std::vector<OpSite> op_sites(const ExprPtr& root);

}  // namespace mrh::jobs
