#include "mrh/mutation.hpp"

#include <sstream>

namespace mrh::mutation {

using jobs::BinOp;
using jobs::ExprPtr;
using jobs::JobSpec;
using jobs::MutationDesc;

namespace {

std::string path_str(const jobs::Path& p) {
  std::string s = "[";
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(p[i]);
  }
  return s + "]";
}

void collect_tree(const std::string& tree_name, const ExprPtr& tree,
                  const JobSpec& job, std::vector<Mutant>& out) {
  if (!tree) return;
  for (const auto& site : jobs::op_sites(tree)) {
    for (BinOp repl : jobs::class_peers(site.op)) {
      MutationDesc desc{tree_name, site.path, repl};
      JobSpec candidate = jobs::apply_mutation(job, desc);
      if (jobs::typecheck_job(candidate)) continue;  // ill-typed: filtered
      Mutant m;
      m.id = "M" + std::to_string(out.size());
      m.original = site.op;
      m.desc = std::move(desc);
      out.push_back(std::move(m));
    }
  }
}

}  // namespace

std::vector<Mutant> generate_mutants(const JobSpec& job) {
  std::vector<Mutant> out;
  collect_tree("map", job.map_body, job, out);
  collect_tree("reduce", job.reduce_body, job, out);
  collect_tree("finalize", job.finalize_body, job, out);
  return out;
}

std::string classification_name(Classification c) {
  return c == Classification::killed ? "killed" : "equivalent";
}

Classification classify(const json& base_output, const json& mutant_output) {
  return canon(base_output) == canon(mutant_output) ? Classification::equivalent
                                                    : Classification::killed;
}

std::vector<std::string> consistency_violations(const KillMatrix& m) {
  std::vector<std::string> out;
  for (const auto& row : m.rows) {
    bool failed = row.verdict == coord::Outcome::fail;
    bool killed = row.cls == Classification::killed;
    if (failed != killed) out.push_back(row.id);
  }
  return out;
}

Tally tally(const KillMatrix& m) {
  Tally t;
  for (const auto& row : m.rows) {
    if (row.cls == Classification::killed)
      ++t.killed;
    else
      ++t.equivalent;
    if (row.verdict == coord::Outcome::fail) ++t.failed_verdicts;
  }
  int non_equivalent = static_cast<int>(m.rows.size()) - t.equivalent;
  if (non_equivalent > 0)
    t.kill_ratio = static_cast<double>(t.failed_verdicts) / non_equivalent;
  return t;
}

KillMatrix run_analysis(const JobSpec& job, const std::string& job_name,
                        const Runner& runner) {
  MutantRun base = runner(std::nullopt);
  if (base.verdict != coord::Outcome::pass)
    throw AnalysisError("base run did not pass (" +
                        coord::outcome_name(base.verdict) +
                        "); fix the test case before measuring mutants");
  KillMatrix matrix;
  matrix.job = job_name;
  matrix.base_output = base.output;

  for (const auto& m : generate_mutants(job)) {
    MutantRun run = runner(m.desc);
    if (run.verdict == coord::Outcome::inconclusive)
      throw AnalysisError("mutant " + m.id +
                          " ran inconclusive; analysis aborted");
    MatrixRow row;
    row.id = m.id;
    row.site = m.desc.tree + " " + path_str(m.desc.path) + ": " +
               jobs::op_name(m.original) + " -> " + jobs::op_name(m.desc.op);
    row.mutation = jobs::mutation_to_json(m.desc);
    row.mutation["original"] = jobs::op_name(m.original);
    row.output = run.output;
    row.verdict = run.verdict;
    row.cls = classify(matrix.base_output, run.output);
    matrix.rows.push_back(std::move(row));
  }
  return matrix;
}

json matrix_to_json(const KillMatrix& m) {
  json rows = json::array();
  for (const auto& row : m.rows)
    rows.push_back({{"id", row.id},
                    {"site", row.site},
                    {"mutation", row.mutation},
                    {"output", row.output},
                    {"verdict", coord::outcome_name(row.verdict)},
                    {"classification", classification_name(row.cls)}});
  return {{"job", m.job},
          {"base_output", m.base_output},
          {"mutants", std::move(rows)}};
}

std::optional<KillMatrix> matrix_from_json(const json& j, std::string* err) {
  auto fail = [&](const std::string& m) -> std::optional<KillMatrix> {
    if (err) *err = m;
    return std::nullopt;
  };
  if (!j.is_object()) return fail("matrix must be an object");
  if (!j.contains("job") || !j["job"].is_string())
    return fail("matrix needs a string 'job'");
  if (!j.contains("base_output")) return fail("matrix needs 'base_output'");
  if (!j.contains("mutants") || !j["mutants"].is_array())
    return fail("matrix needs an array 'mutants'");
  KillMatrix m;
  m.job = j["job"].get<std::string>();
  m.base_output = j["base_output"];
  for (const auto& r : j["mutants"]) {
    if (!r.is_object() || !r.contains("id") || !r["id"].is_string())
      return fail("mutant rows need string ids");
    MatrixRow row;
    row.id = r["id"].get<std::string>();
    row.site = r.value("site", "");
    row.mutation = r.value("mutation", json::object());
    row.output = r.contains("output") ? r["output"] : json(nullptr);
    auto verdict = r.contains("verdict") && r["verdict"].is_string()
                       ? coord::outcome_from_name(r["verdict"].get<std::string>())
                       : std::nullopt;
    if (!verdict) return fail("row " + row.id + ": bad verdict");
    row.verdict = *verdict;
    std::string cls = r.value("classification", "");
    if (cls == "killed")
      row.cls = Classification::killed;
    else if (cls == "equivalent")
      row.cls = Classification::equivalent;
    else
      return fail("row " + row.id + ": bad classification");
    m.rows.push_back(std::move(row));
  }
  return m;
}

std::string render_report(const KillMatrix& m) {
  std::ostringstream out;
  out << "job: " << m.job << "\n";
  out << "base output: " << canon(m.base_output) << "\n";
  out << "method: single-operator substitution on the job's expression trees"
         " (not compiled bytecode); the mutant count depends on the tree"
         " shape, so it is a property of this job, not a universal figure\n\n";
  if (m.rows.empty()) {
    out << "no mutants generated\n";
    return out.str();
  }

  std::size_t site_w = 4;
  for (const auto& row : m.rows) site_w = std::max(site_w, row.site.size());
  auto pad = [](const std::string& s, std::size_t w) {
    return s + std::string(w > s.size() ? w - s.size() : 0, ' ');
  };
  out << pad("id", 5) << pad("site", site_w + 2) << pad("output", 22)
      << pad("verdict", 9) << "classification\n";
  for (const auto& row : m.rows) {
    std::string o = canon(row.output);
    if (o.size() > 20) o = o.substr(0, 17) + "...";
    out << pad(row.id, 5) << pad(row.site, site_w + 2) << pad(o, 22)
        << pad(coord::outcome_name(row.verdict), 9)
        << classification_name(row.cls) << "\n";
  }

  Tally t = tally(m);
  out << "\nmutants: " << m.rows.size() << "  killed: " << t.killed
      << "  equivalent: " << t.equivalent << "\n";
  if (t.kill_ratio)
    out << "kill ratio (failed verdicts / non-equivalent): "
        << t.failed_verdicts << "/" << (m.rows.size() - t.equivalent) << " = "
        << *t.kill_ratio << "\n";
  else
    out << "kill ratio: n/a (no non-equivalent mutants)\n";
  auto bad = consistency_violations(m);
  if (bad.empty()) {
    out << "consistency: ok (fail <=> killed on every row)\n";
  } else {
    out << "consistency: VIOLATED on";
    for (const auto& id : bad) out << " " << id;
    out << "\n";
  }
  return out.str();
}

}  // namespace mrh::mutation
