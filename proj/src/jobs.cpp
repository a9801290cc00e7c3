#include "mrh/jobs.hpp"

#include <algorithm>
#include <fstream>
#include <limits>
#include <sstream>

namespace mrh::jobs {

namespace {

[[noreturn]] void bad(const std::string& msg) {
  throw std::invalid_argument(msg);
}

void require_keys(const json& args, const char* what,
                  std::initializer_list<const char*> allowed) {
  if (!args.is_object()) bad(std::string(what) + ": args must be an object");
  for (auto it = args.begin(); it != args.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) bad(std::string(what) + ": unknown argument '" + it.key() + "'");
  }
}

std::int64_t int_arg(const json& args, const char* key, std::int64_t lo,
                     std::int64_t hi) {
  if (!args.contains(key)) bad(std::string("missing argument '") + key + "'");
  const json& v = args.at(key);
  if (!v.is_number_integer() && !v.is_number_unsigned())
    bad(std::string("argument '") + key + "' must be an integer");
  std::int64_t n = v.get<std::int64_t>();
  if (n < lo || n > hi)
    bad(std::string("argument '") + key + "' out of range [" +
        std::to_string(lo) + ", " + std::to_string(hi) + "]");
  return n;
}

ExprPtr num(std::int64_t v) { return constant(json(v)); }
ExprPtr dbl(double v) { return constant(json(v)); }
ExprPtr str(const char* s) { return constant(json(s)); }

JobSpec make_pi(const json& args) {
  require_keys(args, "pi", {"maps", "points_per_map", "seed"});
  std::int64_t maps = int_arg(args, "maps", 1, 10000);
  std::int64_t n = int_arg(args, "points_per_map", 1, 100000000);
  std::int64_t seed = int_arg(args, "seed", 0, std::numeric_limits<std::int64_t>::max());

  JobSpec job;
  job.name = "pi";
  job.num_reducers = 1;
  job.bindings = {{"seed", seed}, {"n", n}};
  for (std::int64_t t = 0; t < maps; ++t)
    job.splits.push_back({{{json(t), json(nullptr)}}});

  // Per point i: x,y in [0,1)^2; count hits of the inscribed circle.
  ExprPtr hit =
      let("x", call("rand_point_x", {var("seed"), var("task"), var("i")}),
      let("y", call("rand_point_y", {var("seed"), var("task"), var("i")}),
      let("dx", bin(BinOp::sub, var("x"), dbl(0.5)),
      let("dy", bin(BinOp::sub, var("y"), dbl(0.5)),
          cond(bin(BinOp::le,
                   bin(BinOp::add, bin(BinOp::mul, var("dx"), var("dx")),
                       bin(BinOp::mul, var("dy"), var("dy"))),
                   dbl(0.25)),
               num(1), num(0))))));
  job.map_body =
      let("hits", call("sum_range", {var("n"), hit}),
          seq({emit(str("inside"), var("hits")),
               emit(str("outside"), bin(BinOp::sub, var("n"), var("hits")))}));

  job.reduce_body = call("sum", {var("values")});

  // 4*inside/(inside+outside), reported at 4 decimal places.
  job.finalize_body = call(
      "round4", {bin(BinOp::div, bin(BinOp::mul, num(4), var("inside")),
                     bin(BinOp::add, var("inside"), var("outside")))});

  job.map_env = {{"seed", Type::num()}, {"n", Type::num()},
                 {"task", Type::num()}, {"key", Type::num()},
                 {"value", Type::unit()}};
  job.reduce_env = {{"seed", Type::num()},
                    {"n", Type::num()},
                    {"key", Type::str()},
                    {"values", Type::arr(Type::Kind::num)}};
  job.finalize_env = {{"seed", Type::num()},
                      {"n", Type::num()},
                      {"inside", Type::num()},
                      {"outside", Type::num()}};
  return job;
}

JobSpec make_wordcount(const json& args) {
  require_keys(args, "wordcount", {"input", "input_file"});
  bool has_inline = args.contains("input");
  bool has_file = args.contains("input_file");
  if (has_inline == has_file)
    bad("wordcount: give exactly one of 'input' or 'input_file'");
  std::string text;
  if (has_inline) {
    if (!args.at("input").is_string()) bad("wordcount: 'input' must be a string");
    text = args.at("input").get<std::string>();
  } else {
    if (!args.at("input_file").is_string())
      bad("wordcount: 'input_file' must be a string");
    std::ifstream in(args.at("input_file").get<std::string>());
    if (!in) bad("wordcount: cannot read '" +
                 args.at("input_file").get<std::string>() + "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    text = buf.str();
  }

  JobSpec job;
  job.name = "wordcount";
  job.num_reducers = 2;

  if (!text.empty()) {
    std::int64_t line_no = 0;
    size_t start = 0;
    while (start <= text.size()) {
      size_t nl = text.find('\n', start);
      std::string line = nl == std::string::npos
                             ? text.substr(start)
                             : text.substr(start, nl - start);
      job.splits.push_back({{{json(line_no++), json(line)}}});
      if (nl == std::string::npos) break;
      start = nl + 1;
    }
  }

  job.map_body = foreach(
      "w", call("tokenize", {var("value")}),
      cond(bin(BinOp::ne, var("w"), str("")), emit(var("w"), num(1)), seq({})));
  job.reduce_body = call("sum", {var("values")});
  job.finalize_body = nullptr;

  job.map_env = {{"task", Type::num()}, {"key", Type::num()},
                 {"value", Type::str()}};
  job.reduce_env = {{"key", Type::str()},
                    {"values", Type::arr(Type::Kind::num)}};
  return job;
}

}  // namespace

JobSpec make_job(const std::string& name, const json& args) {
  if (name == "pi") return make_pi(args);
  if (name == "wordcount") return make_wordcount(args);
  bad("unknown job '" + name + "'");
}

bool known_job(const std::string& name) {
  return name == "pi" || name == "wordcount";
}

std::vector<std::string> job_names() { return {"pi", "wordcount"}; }

json mutation_to_json(const MutationDesc& m) {
  return {{"tree", m.tree}, {"path", m.path}, {"op", op_name(m.op)}};
}

MutationDesc mutation_from_json(const json& j) {
  if (!j.is_object() || !j.contains("tree") || !j.contains("path") ||
      !j.contains("op"))
    bad("mutation descriptor needs tree, path, op");
  MutationDesc m;
  if (!j.at("tree").is_string()) bad("mutation tree must be a string");
  m.tree = j.at("tree").get<std::string>();
  if (m.tree != "map" && m.tree != "reduce" && m.tree != "finalize")
    bad("mutation tree must be map, reduce, or finalize");
  if (!j.at("path").is_array()) bad("mutation path must be an array");
  for (const auto& el : j.at("path")) {
    if (!el.is_number_integer() && !el.is_number_unsigned())
      bad("mutation path entries must be integers");
    m.path.push_back(el.get<int>());
  }
  auto op = j.at("op").is_string()
                ? op_from_name(j.at("op").get<std::string>())
                : std::nullopt;
  if (!op) bad("unknown mutation operator");
  m.op = *op;
  return m;
}

JobSpec apply_mutation(const JobSpec& job, const MutationDesc& m) {
  JobSpec out = job;
  ExprPtr* tree = nullptr;
  if (m.tree == "map") tree = &out.map_body;
  else if (m.tree == "reduce") tree = &out.reduce_body;
  else if (m.tree == "finalize") tree = &out.finalize_body;
  else bad("mutation tree must be map, reduce, or finalize");
  if (!*tree) bad("job '" + job.name + "' has no " + m.tree + " tree");
  try {
    *tree = replace_op(*tree, m.path, m.op);
  } catch (const std::out_of_range& e) {
    bad(std::string("mutation path invalid: ") + e.what());
  }
  return out;
}

std::optional<std::string> typecheck_job(const JobSpec& job) {
  if (!job.map_body || !job.reduce_body) return "job is missing a tree";
  if (auto err = typecheck(job.map_body, job.map_env))
    return "map: " + *err;
  if (auto err = typecheck(job.reduce_body, job.reduce_env))
    return "reduce: " + *err;
  if (job.finalize_body)
    if (auto err = typecheck(job.finalize_body, job.finalize_env))
      return "finalize: " + *err;
  return std::nullopt;
}

JobSpec job_from_descriptor(const json& desc) {
  if (!desc.is_object() || !desc.contains("name") || !desc.contains("args"))
    bad("job descriptor needs name and args");
  if (!desc.at("name").is_string()) bad("job name must be a string");
  for (auto it = desc.begin(); it != desc.end(); ++it)
    if (it.key() != "name" && it.key() != "args" && it.key() != "mutation")
      bad("job descriptor: unknown key '" + it.key() + "'");
  JobSpec job = make_job(desc.at("name").get<std::string>(), desc.at("args"));
  if (desc.contains("mutation"))
    job = apply_mutation(job, mutation_from_json(desc.at("mutation")));
  return job;
}

// ---- evaluation pieces -----------------------------------------------------

EmitSink run_map(const JobSpec& job, int task) {
  if (task < 0 || static_cast<size_t>(task) >= job.splits.size())
    throw EvalFault("map task out of range");
  EmitSink out;
  for (const auto& [key, value] : job.splits[task].records) {
    Bindings env = job.bindings;
    env["task"] = json(static_cast<std::int64_t>(task));
    env["key"] = key;
    env["value"] = value;
    eval(job.map_body, env, out);
  }
  return out;
}

json run_reduce(const JobSpec& job, const json& key, const json& values) {
  Bindings env = job.bindings;
  env["key"] = key;
  env["values"] = values;
  EmitSink ignored;
  return eval(job.reduce_body, env, ignored);
}

json finish(const JobSpec& job,
            const std::vector<std::pair<json, json>>& reduced) {
  if (!job.finalize_body) {
    json out = json::object();
    for (const auto& [k, v] : reduced)
      out[k.is_string() ? k.get<std::string>() : canon(k)] = v;
    return out;
  }
  Bindings env = job.bindings;
  for (const auto& [k, v] : reduced)
    if (k.is_string()) env[k.get<std::string>()] = v;
  EmitSink ignored;
  return eval(job.finalize_body, env, ignored);
}

int partition_of(const json& key, int num_reducers) {
  if (num_reducers <= 1) return 0;
  return static_cast<int>(fnv1a64(canon(key)) %
                          static_cast<std::uint64_t>(num_reducers));
}

std::vector<std::pair<json, json>> group_pairs(const EmitSink& pairs) {
  std::vector<std::pair<std::string, const std::pair<json, json>*>> keyed;
  keyed.reserve(pairs.size());
  for (const auto& p : pairs) keyed.emplace_back(canon(p.first), &p);
  std::stable_sort(keyed.begin(), keyed.end(),
                   [](const auto& a, const auto& b) { return a.first < b.first; });
  std::vector<std::pair<json, json>> groups;
  for (size_t i = 0; i < keyed.size();) {
    size_t j = i;
    json values = json::array();
    while (j < keyed.size() && keyed[j].first == keyed[i].first)
      values.push_back(keyed[j++].second->second);
    groups.emplace_back(keyed[i].second->first, std::move(values));
    i = j;
  }
  return groups;
}

JobResult run_reference(const JobSpec& job) {
  JobResult res;
  res.output = json(nullptr);
  if (auto err = typecheck_job(job)) {
    res.error = "typecheck: " + *err;
    return res;
  }
  try {
    EmitSink all;
    for (size_t t = 0; t < job.splits.size(); ++t) {
      EmitSink part = run_map(job, static_cast<int>(t));
      all.insert(all.end(), std::make_move_iterator(part.begin()),
                 std::make_move_iterator(part.end()));
    }
    for (const auto& [key, values] : group_pairs(all))
      res.reduced.emplace_back(key, run_reduce(job, key, values));
    res.output = finish(job, res.reduced);
    res.ok = true;
  } catch (const EvalFault& f) {
    res.reduced.clear();
    res.output = json(nullptr);
    res.error = f.what();
  }
  return res;
}

// ---- independent pi helpers -----------------------------------------------

double rand_unit(std::uint64_t seed, std::int64_t task, std::int64_t i,
                 int dim) {
  std::uint64_t ctr = (static_cast<std::uint64_t>(task) << 33) |
                      (static_cast<std::uint64_t>(i) << 1) |
                      (dim ? 1u : 0u);
  return unit_double(stream_u64(seed, ctr));
}

std::pair<std::int64_t, std::int64_t> pi_map_counts(std::uint64_t seed,
                                                    std::int64_t task,
                                                    std::int64_t n) {
  std::int64_t inside = 0;
  for (std::int64_t i = 0; i < n; ++i) {
    double dx = rand_unit(seed, task, i, 0) - 0.5;
    double dy = rand_unit(seed, task, i, 1) - 0.5;
    if (dx * dx + dy * dy <= 0.25) ++inside;
  }
  return {inside, n - inside};
}

double pi_estimate(std::int64_t inside, std::int64_t outside) {
  std::int64_t total = inside + outside;
  if (total <= 0) throw std::invalid_argument("no points sampled");
  return 4.0 * static_cast<double>(inside) / static_cast<double>(total);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> words;
  std::string cur;
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\n' || ch == '\r' || ch == '\f' ||
        ch == '\v') {
      if (!cur.empty()) words.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  if (!cur.empty()) words.push_back(std::move(cur));
  return words;
}

}  // namespace mrh::jobs
