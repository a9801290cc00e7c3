#pragma once

#include "mrh/expr.hpp"

// Job definitions: every job is three expression trees (map, reduce, optional
// finalize) plus its input splits and argument bindings. Keeping jobs as data
// is what makes single-operator mutation mechanical.

namespace mrh::jobs {

struct InputSplit {
  std::vector<std::pair<json, json>> records;  // (key, value)
};

struct JobSpec {
  std::string name;
  ExprPtr map_body;       // env: bindings + task, key, value
  ExprPtr reduce_body;    // env: bindings + key, values
  ExprPtr finalize_body;  // optional; env: bindings + one var per reduced key
  int num_reducers = 1;
  std::vector<InputSplit> splits;
  Bindings bindings;
  TypeEnv map_env, reduce_env, finalize_env;
};

// Build a job from its registry name and argument object. Throws
// std::invalid_argument for unknown names, unknown keys, or bad values.
//   "pi":        {maps, points_per_map, seed}
//   "wordcount": {input} or {input_file}
JobSpec make_job(const std::string& name, const json& args);
bool known_job(const std::string& name);
std::vector<std::string> job_names();

// One-operator substitution, addressed by tree name and child path.
struct MutationDesc {
  std::string tree;  // "map" | "reduce" | "finalize"
  Path path;
  BinOp op;
};
json mutation_to_json(const MutationDesc& m);
MutationDesc mutation_from_json(const json& j);  // throws std::invalid_argument

// Mechanical application; the result is NOT typechecked here, so a
// deliberately ill-typed substitution flows through to evaluation, where it
// surfaces as a job fault.
JobSpec apply_mutation(const JobSpec& job, const MutationDesc& m);

// nullopt when all trees typecheck in their declared environments.
std::optional<std::string> typecheck_job(const JobSpec& job);

// Full job descriptor for the wire: {"name", "args"} plus optional
// {"mutation"}. Builds and applies; does not typecheck (see above).
JobSpec job_from_descriptor(const json& desc);

// ---- evaluation pieces shared by engine and reference ---------------------

// Map phase over one split. Throws EvalFault.
EmitSink run_map(const JobSpec& job, int task);
// Reduce one group. `values` is a json array. Throws EvalFault.
json run_reduce(const JobSpec& job, const json& key, const json& values);
// Finalize (or pack reduced pairs into an object when no finalize tree).
// Throws EvalFault.
json finish(const JobSpec& job,
            const std::vector<std::pair<json, json>>& reduced);

int partition_of(const json& key, int num_reducers);

// Group emissions into (key, values-array) pairs ordered by canonical key
// bytes; values keep encounter order.
std::vector<std::pair<json, json>> group_pairs(const EmitSink& pairs);

// Run the whole job sequentially in-process: the differential oracle for the
// distributed engine, and the fast path for mutation screening.
struct JobResult {
  bool ok = false;       // false => job fault; output is null
  std::string error;
  json output;           // finalize value / reduced object / null on fault
  std::vector<std::pair<json, json>> reduced;  // sorted reduced pairs
};
JobResult run_reference(const JobSpec& job);

// ---- independent pi helpers ----------------------------------------------

// Component of the deterministic point stream; dim 0 = x, 1 = y.
double rand_unit(std::uint64_t seed, std::int64_t task, std::int64_t i,
                 int dim);
// Direct loop over the point stream, bypassing the expression tree; used to
// cross-check the tree evaluation.
std::pair<std::int64_t, std::int64_t> pi_map_counts(std::uint64_t seed,
                                                    std::int64_t task,
                                                    std::int64_t n);
// 4*inside/total; throws std::invalid_argument when total <= 0.
double pi_estimate(std::int64_t inside, std::int64_t outside);

std::vector<std::string> tokenize(const std::string& text);

}  // namespace mrh::jobs
