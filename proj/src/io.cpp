#include "sri/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sri/error.hpp"
#include "sri/selection.hpp"

namespace sri {

using nlohmann::json;

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;  // 32 bytes always suffice for shortest round-trip form
  return std::string(buf, ptr);
}

namespace {

[[noreturn]] void spec_fail(const std::string& msg) {
  throw Error(ErrorCode::SpecParseError, "trial spec: " + msg);
}

void check_keys(const json& obj, const char* where, std::initializer_list<const char*> allowed) {
  for (const auto& item : obj.items()) {
    bool ok = false;
    for (const char* k : allowed)
      if (item.key() == k) ok = true;
    if (!ok) spec_fail(std::string(where) + ": unknown key '" + item.key() + "'");
  }
}

int require_int(const json& v, const std::string& where) {
  if (!v.is_number_integer()) spec_fail(where + " must be an integer");
  return v.get<int>();
}

double require_num(const json& v, const std::string& where) {
  if (!v.is_number()) spec_fail(where + " must be a number");
  return v.get<double>();
}

Mechanism parse_mechanism(const json& m, const std::string& where) {
  if (!m.is_object()) spec_fail(where + " must be an object");
  check_keys(m, where.c_str(), {"kind", "counts", "probs"});
  if (!m.contains("kind") || !m["kind"].is_string()) spec_fail(where + ".kind missing");
  std::string kind = m["kind"].get<std::string>();
  Mechanism out;
  if (kind == "crd") {
    out.kind = MechanismKind::CompletelyRandomized;
    if (!m.contains("counts") || !m["counts"].is_object())
      spec_fail(where + ".counts required for kind 'crd'");
    if (m.contains("probs")) spec_fail(where + ".probs not allowed for kind 'crd'");
    for (const auto& item : m["counts"].items()) {
      if (!item.value().is_array()) spec_fail(where + ".counts values must be arrays");
      std::vector<int> counts;
      for (const auto& c : item.value()) {
        int n = require_int(c, where + ".counts");
        if (n < 0) spec_fail(where + ".counts entries must be >= 0");
        counts.push_back(n);
      }
      out.counts[item.key()] = std::move(counts);
    }
    if (out.counts.empty()) spec_fail(where + ".counts must declare at least one label");
  } else if (kind == "bernoulli") {
    out.kind = MechanismKind::Bernoulli;
    if (!m.contains("probs") || !m["probs"].is_object())
      spec_fail(where + ".probs required for kind 'bernoulli'");
    if (m.contains("counts")) spec_fail(where + ".counts not allowed for kind 'bernoulli'");
    for (const auto& item : m["probs"].items()) {
      if (!item.value().is_object()) spec_fail(where + ".probs values must be objects");
      std::map<std::string, double> per_group;
      for (const auto& g : item.value().items()) {
        double p = require_num(g.value(), where + ".probs");
        if (!(p >= 0.0 && p <= 1.0)) spec_fail(where + ".probs entries must lie in [0, 1]");
        per_group[g.key()] = p;
      }
      out.probs[item.key()] = std::move(per_group);
    }
    if (out.probs.empty()) spec_fail(where + ".probs must declare at least one label");
  } else {
    spec_fail(where + ".kind must be 'crd' or 'bernoulli'");
  }
  return out;
}

json mechanism_json(const Mechanism& m) {
  json out;
  if (m.kind == MechanismKind::CompletelyRandomized) {
    out["kind"] = "crd";
    json counts = json::object();
    for (const auto& [label, c] : m.counts) counts[label] = c;
    out["counts"] = std::move(counts);
  } else {
    out["kind"] = "bernoulli";
    json probs = json::object();
    for (const auto& [label, per_group] : m.probs) {
      json g = json::object();
      for (const auto& [group, p] : per_group) g[group] = p;
      probs[label] = std::move(g);
    }
    out["probs"] = std::move(probs);
  }
  return out;
}

}  // namespace

TrialSpec parse_trial_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    spec_fail(e.what());
  }
  if (!j.is_object()) spec_fail("top level must be an object");
  check_keys(j, "spec", {"num_arms", "stages", "rule", "recruitment"});

  TrialSpec spec;
  if (j.contains("num_arms")) {
    spec.num_arms = require_int(j["num_arms"], "num_arms");
    if (spec.num_arms < 2) spec_fail("num_arms must be >= 2");
  }
  if (!j.contains("stages") || !j["stages"].is_array() || j["stages"].empty())
    spec_fail("stages must be a non-empty array");
  for (std::size_t k = 0; k < j["stages"].size(); ++k) {
    const json& s = j["stages"][k];
    std::string where = "stages[" + std::to_string(k) + "]";
    if (!s.is_object()) spec_fail(where + " must be an object");
    check_keys(s, where.c_str(), {"mechanism", "holdout"});
    if (!s.contains("mechanism")) spec_fail(where + ".mechanism missing");
    StageSpec st;
    st.mechanism = parse_mechanism(s["mechanism"], where + ".mechanism");
    if (st.mechanism.kind == MechanismKind::CompletelyRandomized) {
      for (const auto& [label, counts] : st.mechanism.counts)
        if (static_cast<int>(counts.size()) != spec.num_arms)
          spec_fail(where + ".mechanism.counts['" + label + "'] must list one count per arm");
    }
    if (s.contains("holdout")) {
      if (!s["holdout"].is_boolean()) spec_fail(where + ".holdout must be a boolean");
      st.holdout = s["holdout"].get<bool>();
    }
    spec.stages.push_back(std::move(st));
  }

  if (j.contains("rule")) {
    const json& r = j["rule"];
    if (!r.is_object()) spec_fail("rule must be an object");
    check_keys(r, "rule", {"id", "num_params", "str_params"});
    if (!r.contains("id") || !r["id"].is_string()) spec_fail("rule.id missing");
    spec.rule.id = r["id"].get<std::string>();
    if (!selection_rule_known(spec.rule.id))
      spec_fail("unknown selection rule '" + spec.rule.id + "'");
    if (r.contains("num_params")) {
      if (!r["num_params"].is_object()) spec_fail("rule.num_params must be an object");
      for (const auto& item : r["num_params"].items())
        spec.rule.num_params[item.key()] = require_num(item.value(), "rule.num_params");
    }
    if (r.contains("str_params")) {
      if (!r["str_params"].is_object()) spec_fail("rule.str_params must be an object");
      for (const auto& item : r["str_params"].items()) {
        if (!item.value().is_string()) spec_fail("rule.str_params values must be strings");
        spec.rule.str_params[item.key()] = item.value().get<std::string>();
      }
    }
  }

  if (j.contains("recruitment")) {
    const json& rec = j["recruitment"];
    if (!rec.is_array() || rec.size() != spec.stages.size())
      spec_fail("recruitment must be an array with one entry per stage");
    for (std::size_t k = 0; k < rec.size(); ++k) {
      std::string where = "recruitment[" + std::to_string(k) + "]";
      if (!rec[k].is_object()) spec_fail(where + " must be an object");
      std::map<std::string, std::map<std::string, int>> per_label;
      for (const auto& item : rec[k].items()) {
        if (!item.value().is_object()) spec_fail(where + " values must be objects");
        std::map<std::string, int> sizes;
        for (const auto& g : item.value().items()) {
          int n = require_int(g.value(), where);
          if (n < 0) spec_fail(where + " sizes must be >= 0");
          sizes[g.key()] = n;
        }
        per_label[item.key()] = std::move(sizes);
      }
      spec.recruitment.push_back(std::move(per_label));
    }
  }
  return spec;
}

TrialSpec load_trial_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) spec_fail("cannot read file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trial_spec(buf.str());
}

std::string serialize_trial_spec(const TrialSpec& spec) {
  json j;
  j["num_arms"] = spec.num_arms;
  json stages = json::array();
  for (const auto& st : spec.stages) {
    json s;
    s["mechanism"] = mechanism_json(st.mechanism);
    if (st.holdout) s["holdout"] = true;
    stages.push_back(std::move(s));
  }
  j["stages"] = std::move(stages);
  bool default_rule =
      spec.rule.id == "none" && spec.rule.num_params.empty() && spec.rule.str_params.empty();
  if (!default_rule) {
    json r;
    r["id"] = spec.rule.id;
    if (!spec.rule.num_params.empty()) {
      json np = json::object();
      for (const auto& [k, v] : spec.rule.num_params) np[k] = v;
      r["num_params"] = std::move(np);
    }
    if (!spec.rule.str_params.empty()) {
      json sp = json::object();
      for (const auto& [k, v] : spec.rule.str_params) sp[k] = v;
      r["str_params"] = std::move(sp);
    }
    j["rule"] = std::move(r);
  }
  bool any_recruitment = false;
  for (const auto& per_label : spec.recruitment)
    if (!per_label.empty()) any_recruitment = true;
  if (any_recruitment) {
    json rec = json::array();
    for (const auto& per_label : spec.recruitment) {
      json entry = json::object();
      for (const auto& [label, sizes] : per_label) {
        json g = json::object();
        for (const auto& [group, n] : sizes) g[group] = n;
        entry[label] = std::move(g);
      }
      rec.push_back(std::move(entry));
    }
    j["recruitment"] = std::move(rec);
  }
  return j.dump(2) + "\n";
}

// --- CSV --------------------------------------------------------------------

namespace {

// No quoting: fields must not contain commas or newlines.
std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

// Lines of the file with trailing \r stripped; blank lines skipped but row
// numbering preserved (pair of 1-based row number and content).
std::vector<std::pair<std::size_t, std::string>> csv_lines(const std::string& text) {
  std::vector<std::pair<std::size_t, std::string>> out;
  std::size_t row = 0, start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    std::string line = text.substr(start, end == std::string::npos ? end : end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    row += 1;
    if (!line.empty()) out.emplace_back(row, line);
    if (end == std::string::npos) break;
    start = end + 1;
  }
  return out;
}

double parse_double_cell(const std::string& cell, std::size_t row, const std::string& col) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || !std::isfinite(v))
    throw DataSchemaError(row, col, "row " + std::to_string(row) + ", column " + col +
                                        ": expected a finite number, got '" + cell + "'");
  return v;
}

int parse_int_cell(const std::string& cell, std::size_t row, const std::string& col) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc() || ptr != cell.data() + cell.size() || v < 0)
    throw DataSchemaError(row, col, "row " + std::to_string(row) + ", column " + col +
                                        ": expected a non-negative integer, got '" + cell + "'");
  return v;
}

void check_header(const std::vector<std::string>& cells,
                  const std::vector<std::string>& expected) {
  if (cells.size() < expected.size())
    throw DataSchemaError(1, "header",
                          "header must start with the columns " + [&] {
                            std::string s;
                            for (const auto& e : expected) s += (s.empty() ? "" : ",") + e;
                            return s;
                          }());
  for (std::size_t i = 0; i < expected.size(); ++i)
    if (cells[i] != expected[i])
      throw DataSchemaError(1, expected[i], "header column " + std::to_string(i + 1) +
                                                " must be '" + expected[i] + "', got '" +
                                                cells[i] + "'");
}

}  // namespace

TrialRecord parse_trial_record(const std::string& text) {
  auto lines = csv_lines(text);
  if (lines.empty()) throw DataSchemaError(1, "header", "empty file");
  const std::vector<std::string> base = {"unit_id", "stage", "group", "treatment", "outcome"};
  auto header = split_csv(lines[0].second);
  check_header(header, base);
  std::vector<std::string> cov_names(header.begin() + base.size(), header.end());
  {
    std::set<std::string> seen(base.begin(), base.end());
    for (const auto& c : cov_names)
      if (c.empty() || !seen.insert(c).second)
        throw DataSchemaError(1, c, "duplicate or empty covariate column '" + c + "'");
  }

  TrialRecord rec;
  std::set<std::string> ids;
  // stage -> (unit index, treatment, outcome) in file order
  std::map<int, std::vector<std::tuple<int, Arm, double>>> staged;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    auto [row, line] = lines[li];
    auto cells = split_csv(line);
    if (cells.size() != header.size())
      throw DataSchemaError(row, "",
                            "row " + std::to_string(row) + ": expected " +
                                std::to_string(header.size()) + " cells, got " +
                                std::to_string(cells.size()));
    if (cells[0].empty())
      throw DataSchemaError(row, "unit_id", "row " + std::to_string(row) + ": empty unit_id");
    if (!ids.insert(cells[0]).second)
      throw DataSchemaError(row, "unit_id",
                            "row " + std::to_string(row) + ": duplicate unit_id '" + cells[0] +
                                "'");
    if (cells[2].empty())
      throw DataSchemaError(row, "group", "row " + std::to_string(row) + ": empty group");

    Unit u;
    u.id = cells[0];
    u.group = cells[2];
    for (std::size_t c = 0; c < cov_names.size(); ++c) {
      const std::string& cell = cells[base.size() + c];
      if (!cell.empty()) u.covariates[cov_names[c]] = parse_double_cell(cell, row, cov_names[c]);
    }
    int unit_index = static_cast<int>(rec.units.size());
    rec.units.push_back(std::move(u));

    int stage = parse_int_cell(cells[1], row, "stage");
    if (stage == 0) {
      if (!cells[3].empty() || !cells[4].empty())
        throw DataSchemaError(row, "treatment",
                              "row " + std::to_string(row) +
                                  ": stage-0 rows must leave treatment and outcome empty");
      continue;
    }
    if (cells[3].empty())
      throw DataSchemaError(row, "treatment",
                            "row " + std::to_string(row) + ": missing treatment");
    if (cells[4].empty())
      throw DataSchemaError(row, "outcome", "row " + std::to_string(row) + ": missing outcome");
    Arm a = parse_int_cell(cells[3], row, "treatment");
    double y = parse_double_cell(cells[4], row, "outcome");
    staged[stage].emplace_back(unit_index, a, y);
  }

  if (staged.empty()) throw DataSchemaError(1, "stage", "no recruited rows (stage >= 1)");
  int num_stages = staged.rbegin()->first;
  rec.stages.resize(num_stages);
  for (int k = 1; k <= num_stages; ++k) {
    auto it = staged.find(k);
    if (it == staged.end())
      throw DataSchemaError(1, "stage",
                            "stages must be contiguous: no rows for stage " + std::to_string(k));
    auto& st = rec.stages[k - 1];
    for (const auto& [unit, a, y] : it->second) {
      st.units.push_back(unit);
      st.treatments.push_back(a);
      st.outcomes.push_back(y);
    }
  }
  return rec;
}

TrialRecord load_trial_record(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataSchemaError(0, "file", "cannot read file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_trial_record(buf.str());
}

std::string serialize_trial_record(const TrialRecord& rec) {
  std::set<std::string> cov_set;
  for (const auto& u : rec.units)
    for (const auto& [k, v] : u.covariates) cov_set.insert(k);
  std::vector<std::string> cov_names(cov_set.begin(), cov_set.end());

  std::string out = "unit_id,stage,group,treatment,outcome";
  for (const auto& c : cov_names) out += "," + c;
  out += "\n";

  auto emit = [&](int unit, int stage, const std::string& treatment, const std::string& outcome) {
    const Unit& u = rec.units[unit];
    out += u.id + "," + std::to_string(stage) + "," + u.group + "," + treatment + "," + outcome;
    for (const auto& c : cov_names) {
      auto it = u.covariates.find(c);
      out += ",";
      if (it != u.covariates.end()) out += format_double(it->second);
    }
    out += "\n";
  };

  std::vector<unsigned char> recruited(rec.units.size(), 0);
  for (int k = 0; k < rec.num_stages(); ++k) {
    const auto& st = rec.stages[k];
    for (std::size_t i = 0; i < st.units.size(); ++i) {
      recruited[st.units[i]] = 1;
      emit(st.units[i], k + 1, std::to_string(st.treatments[i]), format_double(st.outcomes[i]));
    }
  }
  for (std::size_t u = 0; u < rec.units.size(); ++u)
    if (!recruited[u]) emit(static_cast<int>(u), 0, "", "");
  return out;
}

std::vector<PoolRow> parse_pool(const std::string& text) {
  auto lines = csv_lines(text);
  if (lines.empty()) throw DataSchemaError(1, "header", "empty file");
  const std::vector<std::string> base = {"unit_id", "group", "treatment", "outcome"};
  auto header = split_csv(lines[0].second);
  check_header(header, base);
  if (header.size() != base.size())
    throw DataSchemaError(1, header[base.size()],
                          "pool files take exactly the columns unit_id,group,treatment,outcome");
  std::vector<PoolRow> out;
  std::set<std::string> ids;
  for (std::size_t li = 1; li < lines.size(); ++li) {
    auto [row, line] = lines[li];
    auto cells = split_csv(line);
    if (cells.size() != base.size())
      throw DataSchemaError(row, "",
                            "row " + std::to_string(row) + ": expected " +
                                std::to_string(base.size()) + " cells, got " +
                                std::to_string(cells.size()));
    if (cells[0].empty())
      throw DataSchemaError(row, "unit_id", "row " + std::to_string(row) + ": empty unit_id");
    if (!ids.insert(cells[0]).second)
      throw DataSchemaError(row, "unit_id",
                            "row " + std::to_string(row) + ": duplicate unit_id '" + cells[0] +
                                "'");
    if (cells[1].empty())
      throw DataSchemaError(row, "group", "row " + std::to_string(row) + ": empty group");
    PoolRow r;
    r.id = cells[0];
    r.group = cells[1];
    r.treatment = parse_int_cell(cells[2], row, "treatment");
    r.outcome = parse_double_cell(cells[3], row, "outcome");
    out.push_back(std::move(r));
  }
  if (out.empty()) throw DataSchemaError(1, "header", "pool file has no data rows");
  return out;
}

std::vector<PoolRow> load_pool(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataSchemaError(0, "file", "cannot read file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_pool(buf.str());
}

std::string serialize_pool(const std::vector<PoolRow>& rows) {
  std::string out = "unit_id,group,treatment,outcome\n";
  for (const auto& r : rows)
    out += r.id + "," + r.group + "," + std::to_string(r.treatment) + "," +
           format_double(r.outcome) + "\n";
  return out;
}

// --- Results ----------------------------------------------------------------

std::string pvalue_json(const PValueResult& r) {
  json j;
  j["estimate"] = r.estimate;
  j["method"] = method_name(r.method);
  j["mc_standard_error"] = r.mc_standard_error;
  j["num_samples"] = r.num_samples;
  if (r.diagnostics.attempts > 0 || r.diagnostics.proposals > 0) {
    json d;
    d["acceptance_rate"] = r.diagnostics.acceptance_rate;
    if (r.diagnostics.attempts > 0) d["attempts"] = r.diagnostics.attempts;
    if (r.diagnostics.proposals > 0) {
      d["proposals"] = r.diagnostics.proposals;
      d["msejd"] = r.diagnostics.msejd;
    }
    j["diagnostics"] = std::move(d);
  }
  return j.dump(2) + "\n";
}

std::string confidence_set_json(const ConfidenceSet& cs, PValueMethod method) {
  json j;
  j["alpha"] = cs.alpha;
  j["method"] = method_name(method);
  json grid;
  grid["lo"] = cs.grid.lo;
  grid["hi"] = cs.grid.hi;
  grid["step"] = cs.grid.step;
  j["grid"] = std::move(grid);
  json intervals = json::array();
  for (const auto& [lo, hi] : cs.intervals) intervals.push_back(json::array({lo, hi}));
  j["intervals"] = std::move(intervals);
  std::size_t failed = 0;
  for (const auto& pt : cs.p_curve)
    if (pt.failed) failed += 1;
  j["num_grid_points"] = cs.p_curve.size();
  j["num_failed_points"] = failed;
  return j.dump(2) + "\n";
}

std::string p_curve_csv(const ConfidenceSet& cs, PValueMethod method) {
  std::string out = "tau,p,se,method\n";
  for (const auto& pt : cs.p_curve) {
    if (pt.failed) continue;
    out += format_double(pt.tau) + "," + format_double(pt.p) + "," + format_double(pt.se) + "," +
           method_name(method) + "\n";
  }
  return out;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::UsageError, "cannot write file '" + path + "'");
  out << content;
  if (!out) throw Error(ErrorCode::UsageError, "write failed for '" + path + "'");
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::UsageError, "cannot read file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace sri
