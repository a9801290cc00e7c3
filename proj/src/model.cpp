#include "mrh/model.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "mrh/jobs.hpp"

namespace mrh::model {

std::optional<TesterId> TesterId::parse(const std::string& s) {
  if (s.size() < 2 || s[0] != 't') return std::nullopt;
  if (s.size() > 2 && s[1] == '0') return std::nullopt;  // no leading zeros
  int idx = 0;
  for (size_t i = 1; i < s.size(); ++i) {
    if (s[i] < '0' || s[i] > '9') return std::nullopt;
    if (idx > 100000) return std::nullopt;
    idx = idx * 10 + (s[i] - '0');
  }
  return TesterId{idx};
}

std::string role_name(Role r) {
  return r == Role::master_controller ? "master" : "worker";
}

std::optional<Role> role_from_name(const std::string& s) {
  if (s == "master") return Role::master_controller;
  if (s == "worker") return Role::worker_controller;
  return std::nullopt;
}

namespace {

const std::map<std::string, Opcode>& opcode_table() {
  static const std::map<std::string, Opcode> table = {
      {"START_MASTER", Opcode::start_master},
      {"START_WORKERS", Opcode::start_workers},
      {"SEND_JOB", Opcode::send_job},
      {"DROP_WORKER", Opcode::drop_worker},
      {"ASSERT_OUTPUT", Opcode::assert_output},
      {"STOP_WORKERS", Opcode::stop_workers},
      {"STOP_MASTER", Opcode::stop_master},
      {"SLEEP", Opcode::sleep_for},
  };
  return table;
}

}  // namespace

std::string opcode_name(Opcode op) {
  for (const auto& [name, code] : opcode_table())
    if (code == op) return name;
  return "?";
}

std::optional<Opcode> opcode_from_name(const std::string& s) {
  auto it = opcode_table().find(s);
  if (it == opcode_table().end()) return std::nullopt;
  return it->second;
}

bool master_only(Opcode op) {
  return op == Opcode::start_master || op == Opcode::send_job ||
         op == Opcode::assert_output || op == Opcode::stop_master;
}

bool worker_only(Opcode op) {
  return op == Opcode::start_workers || op == Opcode::drop_worker ||
         op == Opcode::stop_workers;
}

// ---- parsing ---------------------------------------------------------------

namespace {

struct Errs {
  std::vector<std::string> list;
  void add(const std::string& where, const std::string& what) {
    list.push_back(where + ": " + what);
  }
};

void check_keys(const json& obj, const std::string& where,
                std::initializer_list<const char*> allowed, Errs& errs) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) ok = true;
    if (!ok) errs.add(where, "unknown key '" + it.key() + "'");
  }
}

bool is_int(const json& v) {
  return v.is_number_integer() || v.is_number_unsigned();
}

void check_instruction_args(Opcode op, const json& args,
                            const std::string& where, Errs& errs) {
  auto no_args = [&] {
    if (!args.empty()) errs.add(where, "takes no arguments");
  };
  switch (op) {
    case Opcode::start_master:
    case Opcode::drop_worker:
    case Opcode::stop_workers:
    case Opcode::stop_master:
      no_args();
      break;
    case Opcode::start_workers:
      check_keys(args, where, {"count"}, errs);
      if (args.contains("count") &&
          (!is_int(args["count"]) || args["count"].get<std::int64_t>() < 1 ||
           args["count"].get<std::int64_t>() > 64))
        errs.add(where, "'count' must be an integer in [1, 64]");
      break;
    case Opcode::send_job:
      check_keys(args, where, {"job", "args", "mutation"}, errs);
      if (!args.contains("job") || !args["job"].is_string())
        errs.add(where, "needs a string 'job'");
      if (!args.contains("args") || !args["args"].is_object())
        errs.add(where, "needs an object 'args'");
      if (args.contains("mutation") && !args["mutation"].is_object())
        errs.add(where, "'mutation' must be an object");
      break;
    case Opcode::assert_output: {
      check_keys(args, where, {"expected", "mode", "tol"}, errs);
      if (!args.contains("expected")) errs.add(where, "needs 'expected'");
      std::string mode = "exact";
      if (args.contains("mode")) {
        if (!args["mode"].is_string()) {
          errs.add(where, "'mode' must be a string");
        } else {
          mode = args["mode"].get<std::string>();
          if (mode != "exact" && mode != "round4" && mode != "abs_tol")
            errs.add(where, "'mode' must be exact, round4, or abs_tol");
        }
      }
      if (mode == "abs_tol") {
        if (!args.contains("tol") || !args["tol"].is_number() ||
            args["tol"].get<double>() <= 0)
          errs.add(where, "abs_tol needs a positive number 'tol'");
      } else if (args.contains("tol")) {
        errs.add(where, "'tol' only applies to mode abs_tol");
      }
      break;
    }
    case Opcode::sleep_for:
      check_keys(args, where, {"ms"}, errs);
      if (!args.contains("ms") || !is_int(args["ms"]) ||
          args["ms"].get<std::int64_t>() < 0 ||
          args["ms"].get<std::int64_t>() > 10000000)
        errs.add(where, "'ms' must be an integer in [0, 10000000]");
      break;
  }
}

std::optional<Instruction> parse_instruction(const json& j,
                                             const std::string& where,
                                             Errs& errs) {
  if (!j.is_object()) {
    errs.add(where, "must be an object");
    return std::nullopt;
  }
  check_keys(j, where, {"op", "args"}, errs);
  if (!j.contains("op") || !j["op"].is_string()) {
    errs.add(where, "needs a string 'op'");
    return std::nullopt;
  }
  auto op = opcode_from_name(j["op"].get<std::string>());
  if (!op) {
    errs.add(where, "unknown op '" + j["op"].get<std::string>() + "'");
    return std::nullopt;
  }
  json args = json::object();
  if (j.contains("args")) {
    if (!j["args"].is_object()) {
      errs.add(where, "'args' must be an object");
      return std::nullopt;
    }
    args = j["args"];
  }
  size_t before = errs.list.size();
  check_instruction_args(*op, args, where, errs);
  if (errs.list.size() != before) return std::nullopt;
  return Instruction{*op, std::move(args)};
}

std::optional<Action> parse_action(const json& j, const std::string& where,
                                   Errs& errs) {
  if (!j.is_object()) {
    errs.add(where, "must be an object");
    return std::nullopt;
  }
  check_keys(j, where, {"id", "level", "targets", "instructions", "timeout_ms"},
             errs);
  Action a;
  bool ok = true;
  if (!j.contains("id") || !j["id"].is_string() ||
      j["id"].get<std::string>().empty()) {
    errs.add(where, "needs a non-empty string 'id'");
    ok = false;
  } else {
    a.id = j["id"].get<std::string>();
  }
  if (!j.contains("level") || !is_int(j["level"]) ||
      j["level"].get<std::int64_t>() < 0) {
    errs.add(where, "needs a non-negative integer 'level'");
    ok = false;
  } else {
    a.level = j["level"].get<int>();
  }
  if (!j.contains("timeout_ms") || !is_int(j["timeout_ms"])) {
    errs.add(where, "needs an integer 'timeout_ms'");
    ok = false;
  } else {
    a.timeout_ms = j["timeout_ms"].get<std::int64_t>();
  }
  if (!j.contains("targets") || !j["targets"].is_array()) {
    errs.add(where, "needs an array 'targets'");
    ok = false;
  } else {
    for (size_t i = 0; i < j["targets"].size(); ++i) {
      const json& t = j["targets"][i];
      auto id = t.is_string() ? TesterId::parse(t.get<std::string>())
                              : std::nullopt;
      if (!id) {
        errs.add(where + ".targets[" + std::to_string(i) + "]",
                 "not a tester id (tN)");
        ok = false;
      } else {
        a.targets.push_back(*id);
      }
    }
  }
  if (!j.contains("instructions") || !j["instructions"].is_array()) {
    errs.add(where, "needs an array 'instructions'");
    ok = false;
  } else {
    for (size_t i = 0; i < j["instructions"].size(); ++i) {
      auto ins = parse_instruction(
          j["instructions"][i], where + ".instructions[" + std::to_string(i) + "]",
          errs);
      if (ins)
        a.instructions.push_back(std::move(*ins));
      else
        ok = false;
    }
  }
  if (!ok) return std::nullopt;
  return a;
}

}  // namespace

ParseResult parse_test_case(const json& doc) {
  Errs errs;
  TestCase tc;
  if (!doc.is_object()) {
    return {std::nullopt, {"test case: document must be a JSON object"}};
  }
  check_keys(doc, "test case", {"name", "testers", "actions"}, errs);
  if (!doc.contains("name") || !doc["name"].is_string() ||
      doc["name"].get<std::string>().empty())
    errs.add("test case", "needs a non-empty string 'name'");
  else
    tc.name = doc["name"].get<std::string>();

  if (!doc.contains("testers") || !doc["testers"].is_array()) {
    errs.add("test case", "needs an array 'testers'");
  } else {
    for (size_t i = 0; i < doc["testers"].size(); ++i) {
      const json& t = doc["testers"][i];
      std::string where = "testers[" + std::to_string(i) + "]";
      if (!t.is_object()) {
        errs.add(where, "must be an object");
        continue;
      }
      check_keys(t, where, {"id", "role"}, errs);
      auto id = t.contains("id") && t["id"].is_string()
                    ? TesterId::parse(t["id"].get<std::string>())
                    : std::nullopt;
      if (!id) {
        errs.add(where, "needs an 'id' of the form tN");
        continue;
      }
      auto role = t.contains("role") && t["role"].is_string()
                      ? role_from_name(t["role"].get<std::string>())
                      : std::nullopt;
      if (!role) {
        errs.add(where, "needs a 'role' of master or worker");
        continue;
      }
      tc.testers.push_back({*id, *role});
    }
  }

  if (!doc.contains("actions") || !doc["actions"].is_array()) {
    errs.add("test case", "needs an array 'actions'");
  } else {
    for (size_t i = 0; i < doc["actions"].size(); ++i) {
      auto a = parse_action(doc["actions"][i],
                            "actions[" + std::to_string(i) + "]", errs);
      if (a) tc.actions.push_back(std::move(*a));
    }
  }

  if (!errs.list.empty()) return {std::nullopt, std::move(errs.list)};
  return {std::move(tc), {}};
}

ParseResult load_test_case_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) return {std::nullopt, {"cannot open '" + path + "'"}};
  json doc;
  try {
    in >> doc;
  } catch (const json::parse_error& e) {
    return {std::nullopt, {std::string("invalid JSON: ") + e.what()}};
  }
  return parse_test_case(doc);
}

// ---- validation -------------------------------------------------------------

std::vector<std::string> validate(const TestCase& tc) {
  std::vector<std::string> errs;
  auto err = [&](const std::string& m) { errs.push_back(m); };

  if (tc.testers.empty()) err("roster is empty");
  std::set<TesterId> declared;
  int masters = 0;
  for (const auto& t : tc.testers) {
    if (!declared.insert(t.id).second)
      err("tester " + t.id.str() + " declared twice");
    if (t.role == Role::master_controller) ++masters;
  }
  if (masters > 1) err("more than one master-controller tester");

  std::map<TesterId, Role> roles;
  for (const auto& t : tc.testers) roles[t.id] = t.role;

  std::set<std::string> action_ids;
  std::set<int> levels;
  for (const auto& a : tc.actions) {
    std::string where = "action '" + a.id + "'";
    if (!action_ids.insert(a.id).second) err(where + ": duplicate id");
    levels.insert(a.level);
    if (a.timeout_ms <= 0) err(where + ": timeout_ms must be positive");
    if (a.targets.empty()) err(where + ": no targets");
    if (a.instructions.empty()) err(where + ": no instructions");
    std::set<TesterId> seen;
    for (const auto& t : a.targets) {
      if (!declared.count(t)) err(where + ": target " + t.str() + " not declared");
      if (!seen.insert(t).second)
        err(where + ": target " + t.str() + " listed twice");
    }
    for (size_t i = 0; i < a.instructions.size(); ++i) {
      const Instruction& ins = a.instructions[i];
      std::string iw =
          where + " instruction " + std::to_string(i) + " (" +
          opcode_name(ins.op) + ")";
      for (const auto& t : a.targets) {
        auto it = roles.find(t);
        if (it == roles.end()) continue;
        if (master_only(ins.op) && it->second != Role::master_controller)
          err(iw + ": targets non-master " + t.str());
        if (worker_only(ins.op) && it->second != Role::worker_controller)
          err(iw + ": targets non-worker " + t.str());
      }
      if (ins.op == Opcode::send_job) {
        json desc = {{"name", ins.args.value("job", "")},
                     {"args", ins.args.value("args", json::object())}};
        if (ins.args.contains("mutation"))
          desc["mutation"] = ins.args["mutation"];
        try {
          jobs::job_from_descriptor(desc);
        } catch (const std::invalid_argument& e) {
          err(iw + ": " + e.what());
        }
      }
    }
  }

  if (!tc.actions.empty()) {
    int max_level = *levels.rbegin();
    for (int l = 0; l <= max_level; ++l)
      if (!levels.count(l))
        err("level " + std::to_string(l) + " is empty (levels must be contiguous from 0)");
  }
  return errs;
}

Schedule build_schedule(const TestCase& tc) {
  auto errs = validate(tc);
  if (!errs.empty()) {
    std::string joined;
    for (const auto& e : errs) {
      if (!joined.empty()) joined += "; ";
      joined += e;
    }
    throw std::invalid_argument(joined);
  }
  std::map<int, std::vector<Action>> by_level;
  Schedule s;
  for (const auto& a : tc.actions) {
    by_level[a.level].push_back(a);
    s.total_pairs += a.targets.size();
  }
  for (auto& [level, actions] : by_level)
    s.levels.emplace_back(level, std::move(actions));
  return s;
}

// ---- serialization -----------------------------------------------------------

json to_json(const TestCase& tc) {
  json testers = json::array();
  for (const auto& t : tc.testers)
    testers.push_back({{"id", t.id.str()}, {"role", role_name(t.role)}});
  json actions = json::array();
  for (const auto& a : tc.actions) {
    json targets = json::array();
    for (const auto& t : a.targets) targets.push_back(t.str());
    json instrs = json::array();
    for (const auto& ins : a.instructions)
      instrs.push_back({{"op", opcode_name(ins.op)}, {"args", ins.args}});
    actions.push_back({{"id", a.id},
                       {"level", a.level},
                       {"targets", std::move(targets)},
                       {"instructions", std::move(instrs)},
                       {"timeout_ms", a.timeout_ms}});
  }
  return {{"name", tc.name},
          {"testers", std::move(testers)},
          {"actions", std::move(actions)}};
}

}  // namespace mrh::model
