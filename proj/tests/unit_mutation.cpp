#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "mrh/mutation.hpp"

using namespace mrh;
using namespace mrh::mutation;
using jobs::BinOp;

namespace {

jobs::JobSpec small_pi() {
  return jobs::make_job(
      "pi", {{"maps", 2}, {"points_per_map", 2000}, {"seed", 42}});
}

jobs::JobSpec small_wordcount() {
  return jobs::make_job(
      "wordcount",
      {{"input", "the quick brown fox jumps over the lazy dog\nthe fox"}});
}

// What a real harness run does, minus the cluster: evaluate the (possibly
// mutated) job sequentially and fail the verdict iff the output diverges
// from the unmutated job's.
Runner reference_runner(jobs::JobSpec base_job) {
  json base_output = jobs::run_reference(base_job).output;
  return [base_job = std::move(base_job),
          base_output](const std::optional<jobs::MutationDesc>& m) {
    jobs::JobSpec j = m ? jobs::apply_mutation(base_job, *m) : base_job;
    jobs::JobResult r = jobs::run_reference(j);
    MutantRun run;
    run.output = r.output;
    run.verdict = canon(run.output) == canon(base_output)
                      ? coord::Outcome::pass
                      : coord::Outcome::fail;
    return run;
  };
}

const jobs::ExprPtr& tree_of(const jobs::JobSpec& j, const std::string& name) {
  if (name == "map") return j.map_body;
  if (name == "reduce") return j.reduce_body;
  return j.finalize_body;
}

MatrixRow row(std::string id, coord::Outcome verdict, Classification cls) {
  MatrixRow r;
  r.id = std::move(id);
  r.verdict = verdict;
  r.cls = cls;
  return r;
}

}  // namespace

TEST_CASE("the pi job yields its frozen mutant census") {
  jobs::JobSpec job = small_pi();
  std::vector<Mutant> ms = generate_mutants(job);
  REQUIRE(ms.size() == 32);

  std::map<std::string, int> tree_rank{{"map", 0}, {"reduce", 1},
                                       {"finalize", 2}};
  int last_rank = 0;
  for (std::size_t i = 0; i < ms.size(); ++i) {
    const Mutant& m = ms[i];
    CHECK(m.id == "M" + std::to_string(i));
    // Generation order walks map, then reduce, then finalize.
    int rank = tree_rank.at(m.desc.tree);
    CHECK(rank >= last_rank);
    last_rank = rank;
    // Substitutions stay inside the operator class and never no-op.
    CHECK(jobs::op_class(m.desc.op) == jobs::op_class(m.original));
    CHECK(m.desc.op != m.original);
    // Every mutant differs from the base in exactly one tree, at one site,
    // and still typechecks.
    jobs::JobSpec mutated = jobs::apply_mutation(job, m.desc);
    CHECK_FALSE(jobs::typecheck_job(mutated).has_value());
    for (const char* t : {"map", "reduce", "finalize"}) {
      if (t == m.desc.tree)
        CHECK(jobs::diff_count(tree_of(job, t), tree_of(mutated, t)) == 1);
      else
        CHECK(jobs::same_tree(tree_of(job, t), tree_of(mutated, t)));
    }
  }
}

TEST_CASE("the wordcount job yields its frozen mutant census") {
  std::vector<Mutant> ms = generate_mutants(small_wordcount());
  REQUIRE(ms.size() == 5);
  std::set<BinOp> replacements;
  for (const Mutant& m : ms) {
    CHECK(m.original == BinOp::ne);  // one relational site, five peers
    CHECK(m.desc.tree == ms[0].desc.tree);
    CHECK(m.desc.path == ms[0].desc.path);
    replacements.insert(m.desc.op);
  }
  CHECK(replacements ==
        std::set<BinOp>{BinOp::lt, BinOp::le, BinOp::gt, BinOp::ge,
                        BinOp::eq});
}

TEST_CASE("classification is canonical-output equality") {
  CHECK(classify(json(3.1416), json(3.1416)) == Classification::equivalent);
  CHECK(classify(json(3.1416), json(3.1425)) == Classification::killed);
  CHECK(classify(json(3.1416), json(nullptr)) == Classification::killed);
  // ints and doubles with equal value are different canonical outputs
  CHECK(classify(json(1), json(1.0)) == Classification::killed);
  CHECK(classify(json::object(), json::object()) ==
        Classification::equivalent);
}

TEST_CASE("consistency demands fail exactly when killed") {
  KillMatrix m;
  m.rows.push_back(row("M0", coord::Outcome::fail, Classification::killed));
  m.rows.push_back(row("M1", coord::Outcome::pass, Classification::equivalent));
  m.rows.push_back(row("M2", coord::Outcome::pass, Classification::killed));
  m.rows.push_back(row("M3", coord::Outcome::fail, Classification::equivalent));
  m.rows.push_back(
      row("M4", coord::Outcome::inconclusive, Classification::equivalent));
  CHECK(consistency_violations(m) == std::vector<std::string>{"M2", "M3"});
}

TEST_CASE("tally divides failed verdicts by non-equivalent mutants") {
  KillMatrix m;
  m.rows.push_back(row("M0", coord::Outcome::fail, Classification::killed));
  m.rows.push_back(row("M1", coord::Outcome::fail, Classification::killed));
  m.rows.push_back(row("M2", coord::Outcome::pass, Classification::equivalent));
  Tally t = tally(m);
  CHECK(t.killed == 2);
  CHECK(t.equivalent == 1);
  CHECK(t.failed_verdicts == 2);
  REQUIRE(t.kill_ratio.has_value());
  CHECK(*t.kill_ratio == 1.0);

  KillMatrix all_equiv;
  all_equiv.rows.push_back(
      row("M0", coord::Outcome::pass, Classification::equivalent));
  CHECK_FALSE(tally(all_equiv).kill_ratio.has_value());

  CHECK_FALSE(tally(KillMatrix{}).kill_ratio.has_value());
  CHECK(tally(KillMatrix{}).killed == 0);
}

TEST_CASE("analysis of the pi job kills all non-equivalent mutants") {
  jobs::JobSpec job = small_pi();
  KillMatrix m = run_analysis(job, "pi", reference_runner(job));

  CHECK(m.job == "pi");
  CHECK(m.base_output == json(3.163));
  REQUIRE(m.rows.size() == 32);
  CHECK(consistency_violations(m).empty());

  Tally t = tally(m);
  CHECK(t.killed == 31);
  CHECK(t.equivalent == 1);
  REQUIRE(t.kill_ratio.has_value());
  CHECK(*t.kill_ratio == 1.0);

  // The one equivalent mutant: <= to < on the circle-inclusion test, which
  // only matters for points exactly on the boundary.
  for (const auto& r : m.rows)
    if (r.cls == Classification::equivalent) {
      CHECK(r.site.find("map") == 0);
      CHECK(r.site.find("le -> lt") != std::string::npos);
      CHECK(r.output == m.base_output);
    }
}

TEST_CASE("analysis of the wordcount job matches its frozen tallies") {
  jobs::JobSpec job = small_wordcount();
  KillMatrix m = run_analysis(job, "wordcount", reference_runner(job));

  REQUIRE(m.rows.size() == 5);
  CHECK(consistency_violations(m).empty());
  Tally t = tally(m);
  CHECK(t.killed == 3);
  CHECK(t.equivalent == 2);
  REQUIRE(t.kill_ratio.has_value());
  CHECK(*t.kill_ratio == 1.0);
  for (const auto& r : m.rows)
    if (r.cls == Classification::killed) CHECK(r.output == json::object());
}

TEST_CASE("analysis refuses a broken base run or an inconclusive mutant") {
  jobs::JobSpec job = small_wordcount();

  Runner failing_base = [](const std::optional<jobs::MutationDesc>&) {
    MutantRun r;
    r.verdict = coord::Outcome::fail;
    return r;
  };
  CHECK_THROWS_AS(run_analysis(job, "wordcount", failing_base), AnalysisError);

  json base_output = jobs::run_reference(job).output;
  Runner flaky = [&](const std::optional<jobs::MutationDesc>& m) {
    MutantRun r;
    r.verdict = m ? coord::Outcome::inconclusive : coord::Outcome::pass;
    r.output = base_output;
    return r;
  };
  CHECK_THROWS_AS(run_analysis(job, "wordcount", flaky), AnalysisError);
}

TEST_CASE("a kill matrix round-trips through json") {
  jobs::JobSpec job = small_wordcount();
  KillMatrix m = run_analysis(job, "wordcount", reference_runner(job));

  json j = matrix_to_json(m);
  std::string err;
  auto back = matrix_from_json(j, &err);
  REQUIRE(back.has_value());
  CHECK(back->job == m.job);
  CHECK(back->base_output == m.base_output);
  REQUIRE(back->rows.size() == m.rows.size());
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    CHECK(back->rows[i].id == m.rows[i].id);
    CHECK(back->rows[i].site == m.rows[i].site);
    CHECK(back->rows[i].mutation == m.rows[i].mutation);
    CHECK(back->rows[i].output == m.rows[i].output);
    CHECK(back->rows[i].verdict == m.rows[i].verdict);
    CHECK(back->rows[i].cls == m.rows[i].cls);
  }

  CHECK_FALSE(matrix_from_json(json::array(), &err).has_value());
  CHECK(err == "matrix must be an object");
  CHECK_FALSE(matrix_from_json(json{{"job", "x"}}, &err).has_value());
  json bad_row = j;
  bad_row["mutants"][0]["verdict"] = "maybe";
  CHECK_FALSE(matrix_from_json(bad_row, &err).has_value());
  CHECK(err.find("bad verdict") != std::string::npos);
}

TEST_CASE("the rendered report carries tallies and methodology") {
  jobs::JobSpec job = small_pi();
  KillMatrix m = run_analysis(job, "pi", reference_runner(job));
  std::string report = render_report(m);

  CHECK(report.find("job: pi") != std::string::npos);
  CHECK(report.find("base output: 3.163") != std::string::npos);
  CHECK(report.find("single-operator substitution") != std::string::npos);
  CHECK(report.find("mutants: 32  killed: 31  equivalent: 1") !=
        std::string::npos);
  CHECK(report.find("31/31 = 1") != std::string::npos);
  CHECK(report.find("consistency: ok") != std::string::npos);
  CHECK(report.find("M0") != std::string::npos);

  CHECK(render_report(KillMatrix{}).find("no mutants generated") !=
        std::string::npos);
}
