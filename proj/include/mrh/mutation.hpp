#pragma once

#include <functional>

#include "mrh/coordinator.hpp"
#include "mrh/jobs.hpp"

// Mutation analysis: derive every single-operator substitution of a job that
// stays within the operator's class and still typechecks, run each mutant
// through the harness, and tabulate kill results. A mutant is equivalent iff
// its canonical output equals the unmutated job's; the NULL output never
// equals a real one, so faulting mutants are killed by definition.

namespace mrh::mutation {

struct Mutant {
  std::string id;  // M0, M1, ... in generation order
  jobs::BinOp original{};
  jobs::MutationDesc desc;  // tree, path, replacement op
};

// Deterministic order: map tree, then reduce, then finalize; preorder sites;
// same-class replacements in a fixed sequence. Ill-typed candidates are
// filtered out (same-class substitution keeps types, so in practice nothing
// is dropped — the filter guards the invariant, not the common case).
std::vector<Mutant> generate_mutants(const jobs::JobSpec& job);

enum class Classification { killed, equivalent };
std::string classification_name(Classification c);

Classification classify(const json& base_output, const json& mutant_output);

struct MatrixRow {
  std::string id;
  std::string site;  // human form: "map [0,1]: le -> lt"
  json mutation;     // machine form (descriptor + original)
  json output = json(nullptr);
  coord::Outcome verdict = coord::Outcome::inconclusive;
  Classification cls = Classification::killed;
};

struct KillMatrix {
  std::string job;
  json base_output = json(nullptr);
  std::vector<MatrixRow> rows;
};

// Every row must satisfy: verdict == fail  <=>  classification == killed.
// Returns the ids of rows violating it.
std::vector<std::string> consistency_violations(const KillMatrix& m);

struct Tally {
  int killed = 0;
  int equivalent = 0;
  int failed_verdicts = 0;
  // killed (by verdict) over non-equivalent; nullopt when no non-equivalent
  // mutants exist.
  std::optional<double> kill_ratio;
};
Tally tally(const KillMatrix& m);

// One harness execution of the (possibly mutated) job's test case.
struct MutantRun {
  coord::Outcome verdict = coord::Outcome::inconclusive;
  json output = json(nullptr);  // observed job output; null when NULL/absent
};
// nullopt descriptor = the unmutated base run.
using Runner = std::function<MutantRun(const std::optional<jobs::MutationDesc>&)>;

struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Base run first (must pass — a broken test bed would classify garbage),
// then every generated mutant. An inconclusive mutant run aborts: timeouts
// must be fixed, not recorded as kills.
KillMatrix run_analysis(const jobs::JobSpec& job, const std::string& job_name,
                        const Runner& runner);

json matrix_to_json(const KillMatrix& m);
std::optional<KillMatrix> matrix_from_json(const json& j, std::string* err);

// Human-readable table plus kill statistics.
std::string render_report(const KillMatrix& m);

}  // namespace mrh::mutation
