#include "submhe/config.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "submhe/errors.hpp"

namespace submhe {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

[[noreturn]] void parse_error(const std::string& path, const std::string& what) {
  throw Error(error_kind::kParseError, path + ": " + what, path);
}

[[noreturn]] void invalid(const std::string& path, const std::string& what) {
  throw Error(error_kind::kValidationError, path + ": " + what, path);
}

std::string join(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

void check_object(const json& j, const std::string& path, const std::set<std::string>& allowed) {
  if (!j.is_object()) parse_error(path, "expected an object");
  for (const auto& [key, value] : j.items())
    if (!allowed.count(key)) parse_error(join(path, key), "unknown key");
}

const json* find(const json& obj, const std::string& key) {
  auto it = obj.find(key);
  return it == obj.end() ? nullptr : &*it;
}

const json& require(const json& obj, const std::string& key, const std::string& path) {
  const json* v = find(obj, key);
  if (!v) invalid(join(path, key), "required field is missing");
  return *v;
}

double number(const json& j, const std::string& path, bool allow_infinite = false) {
  if (j.is_number()) return j.get<double>();
  if (allow_infinite && j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf") return kInf;
    if (s == "-inf") return -kInf;
  }
  parse_error(path, allow_infinite ? "expected a number, \"inf\" or \"-inf\"" : "expected a number");
}

int integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) parse_error(path, "expected an integer");
  const auto v = j.get<std::int64_t>();
  if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max())
    invalid(path, "integer out of range");
  return static_cast<int>(v);
}

std::uint64_t unsigned_integer(const json& j, const std::string& path) {
  if (j.is_number_unsigned()) return j.get<std::uint64_t>();
  if (j.is_number_integer()) {
    const auto v = j.get<std::int64_t>();
    if (v < 0) invalid(path, "must be nonnegative");
    return static_cast<std::uint64_t>(v);
  }
  parse_error(path, "expected a nonnegative integer");
}

bool boolean(const json& j, const std::string& path) {
  if (!j.is_boolean()) parse_error(path, "expected true or false");
  return j.get<bool>();
}

std::string string(const json& j, const std::string& path) {
  if (!j.is_string()) parse_error(path, "expected a string");
  return j.get<std::string>();
}

VectorXd vector(const json& j, const std::string& path, bool allow_infinite = false) {
  if (!j.is_array()) parse_error(path, "expected an array of numbers");
  VectorXd v(static_cast<Index>(j.size()));
  for (size_t i = 0; i < j.size(); ++i)
    v[static_cast<Index>(i)] = number(j[i], path + "[" + std::to_string(i) + "]", allow_infinite);
  return v;
}

MatrixXd matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) parse_error(path, "expected a nonempty array of rows");
  const size_t cols = j[0].is_array() ? j[0].size() : 0;
  if (cols == 0) parse_error(path + "[0]", "expected a nonempty row");
  MatrixXd m(static_cast<Index>(j.size()), static_cast<Index>(cols));
  for (size_t r = 0; r < j.size(); ++r) {
    const std::string row_path = path + "[" + std::to_string(r) + "]";
    const VectorXd row = vector(j[r], row_path);
    if (static_cast<size_t>(row.size()) != cols) invalid(row_path, "rows must have equal length");
    m.row(static_cast<Index>(r)) = row.transpose();
  }
  return m;
}

Box box(const json& j, const std::string& path) {
  check_object(j, path, {"lower", "upper"});
  Box b{vector(require(j, "lower", path), join(path, "lower"), true),
        vector(require(j, "upper", path), join(path, "upper"), true)};
  if (b.lower.size() != b.upper.size()) invalid(path, "lower and upper differ in length");
  for (Index i = 0; i < b.size(); ++i)
    if (b.lower[i] > b.upper[i]) invalid(path, "lower exceeds upper at index " + std::to_string(i));
  return b;
}

Box optional_box(const json& obj, const std::string& key, const std::string& path, Index n) {
  const json* v = find(obj, key);
  if (!v) return Box::unbounded(n);
  Box b = box(*v, join(path, key));
  if (b.size() != n) invalid(join(path, key), "expected " + std::to_string(n) + " entries");
  return b;
}

void expect_shape(const MatrixXd& m, Index rows, Index cols, const std::string& path) {
  if (m.rows() != rows || m.cols() != cols)
    invalid(path, "expected " + std::to_string(rows) + "x" + std::to_string(cols) + ", got " +
                      std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
}

void expect_size(const VectorXd& v, Index n, const std::string& path) {
  if (v.size() != n) invalid(path, "expected " + std::to_string(n) + " entries");
}

json number_json(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return v;
}

json vector_json(const VectorXd& v) {
  json a = json::array();
  for (Index i = 0; i < v.size(); ++i) a.push_back(number_json(v[i]));
  return a;
}

json matrix_json(const MatrixXd& m) {
  json a = json::array();
  for (Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
  return a;
}

json box_json(const Box& b) { return {{"lower", vector_json(b.lower)}, {"upper", vector_json(b.upper)}}; }

LtiSystem parse_system(const json& j) {
  const std::string path = "system";
  check_object(j, path, {"A", "B", "C", "x_box", "u_box", "y_box", "w1_box", "w2_box"});
  LtiSystem s;
  s.A = matrix(require(j, "A", path), "system.A");
  s.B = matrix(require(j, "B", path), "system.B");
  s.C = matrix(require(j, "C", path), "system.C");
  const Index nx = s.A.rows();
  expect_shape(s.A, nx, nx, "system.A");
  expect_shape(s.B, nx, s.B.cols(), "system.B");
  expect_shape(s.C, s.C.rows(), nx, "system.C");
  s.x_box = optional_box(j, "x_box", path, nx);
  s.u_box = optional_box(j, "u_box", path, s.nu());
  s.y_box = optional_box(j, "y_box", path, s.ny());
  s.w1_box = optional_box(j, "w1_box", path, nx);
  s.w2_box = optional_box(j, "w2_box", path, s.ny());
  try {
    validate_system(s);
  } catch (const Error& e) {
    invalid(path, std::string(e.kind()) + ": " + e.what());
  }
  return s;
}

CertificateBlock parse_certificate(const json& j, const LtiSystem& sys) {
  const std::string path = "certificate";
  check_object(j, path, {"P", "Q", "R", "eta", "tol", "search_budget"});
  CertificateBlock c;
  const json& P = require(j, "P", path);
  if (P.is_string()) {
    if (P.get<std::string>() != "search") parse_error("certificate.P", "expected a matrix or \"search\"");
  } else {
    c.P = matrix(P, "certificate.P");
    expect_shape(*c.P, sys.nx(), sys.nx(), "certificate.P");
  }
  c.Q = matrix(require(j, "Q", path), "certificate.Q");
  expect_shape(c.Q, sys.nw(), sys.nw(), "certificate.Q");
  c.R = matrix(require(j, "R", path), "certificate.R");
  expect_shape(c.R, sys.ny(), sys.ny(), "certificate.R");
  c.eta = number(require(j, "eta", path), "certificate.eta");
  if (!(c.eta >= 0.0 && c.eta < 1.0)) invalid("certificate.eta", "must lie in [0, 1)");
  if (const json* v = find(j, "tol")) c.tol = number(*v, "certificate.tol");
  if (!(c.tol >= 0.0)) invalid("certificate.tol", "must be nonnegative");
  if (const json* v = find(j, "search_budget")) c.search_budget = integer(*v, "certificate.search_budget");
  if (c.search_budget < 1) invalid("certificate.search_budget", "must be positive");
  return c;
}

ControllerBlock parse_controller(const json& j, const LtiSystem& sys) {
  const std::string path = "controller";
  check_object(j, path, {"gain", "L_pi", "gamma13_slope"});
  ControllerBlock c;
  const json& gain = require(j, "gain", path);
  if (gain.is_string()) {
    if (gain.get<std::string>() != "lqr") parse_error("controller.gain", "expected a matrix or \"lqr\"");
  } else {
    c.gain = matrix(gain, "controller.gain");
    expect_shape(*c.gain, sys.nu(), sys.nx(), "controller.gain");
  }
  if (const json* v = find(j, "L_pi")) {
    c.L_pi = number(*v, "controller.L_pi");
    if (!(*c.L_pi >= 0.0)) invalid("controller.L_pi", "must be nonnegative");
  }
  if (const json* v = find(j, "gamma13_slope")) {
    c.gamma13_slope = number(*v, "controller.gamma13_slope");
    if (!(*c.gamma13_slope >= 0.0)) invalid("controller.gamma13_slope", "must be nonnegative");
  }
  return c;
}

MheBlock parse_mhe(const json& j) {
  const std::string path = "mhe";
  check_object(j, path, {"M", "K", "phi_base"});
  MheBlock m;
  m.M = integer(require(j, "M", path), "mhe.M");
  if (m.M < 1) invalid("mhe.M", "must be at least 1");
  const json& K = require(j, "K", path);
  if (K.is_string()) {
    if (K.get<std::string>() != "auto") parse_error("mhe.K", "expected an integer or \"auto\"");
  } else {
    m.K = integer(K, "mhe.K");
    if (*m.K < 0) invalid("mhe.K", "must be nonnegative");
  }
  if (const json* v = find(j, "phi_base")) {
    m.phi_base = number(*v, "mhe.phi_base");
    if (!(*m.phi_base >= 0.0 && *m.phi_base < 1.0)) invalid("mhe.phi_base", "must lie in [0, 1)");
  }
  return m;
}

ScenarioBlock parse_scenario(const json& j, const LtiSystem& sys) {
  const std::string path = "scenario";
  check_object(j, path, {"x0", "prior", "z0", "steps", "seed", "w1_box", "w2_box", "oracle", "oracle_tol"});
  ScenarioBlock s;
  s.x0 = vector(require(j, "x0", path), "scenario.x0");
  expect_size(s.x0, sys.nx(), "scenario.x0");
  s.prior = vector(require(j, "prior", path), "scenario.prior");
  expect_size(s.prior, sys.nx(), "scenario.prior");
  if (const json* v = find(j, "z0")) {
    s.z0 = vector(*v, "scenario.z0");
    expect_size(*s.z0, sys.nx(), "scenario.z0");
  }
  if (const json* v = find(j, "steps")) s.steps = integer(*v, "scenario.steps");
  if (s.steps < 1) invalid("scenario.steps", "must be at least 1");
  if (const json* v = find(j, "seed")) s.seed = unsigned_integer(*v, "scenario.seed");
  s.w1_box = box(require(j, "w1_box", path), "scenario.w1_box");
  expect_size(s.w1_box.lower, sys.nx(), "scenario.w1_box");
  s.w2_box = box(require(j, "w2_box", path), "scenario.w2_box");
  expect_size(s.w2_box.lower, sys.ny(), "scenario.w2_box");
  if (!s.w1_box.bounded()) invalid("scenario.w1_box", "sampling box must be bounded");
  if (!s.w2_box.bounded()) invalid("scenario.w2_box", "sampling box must be bounded");
  if (const json* v = find(j, "oracle")) s.oracle = boolean(*v, "scenario.oracle");
  if (const json* v = find(j, "oracle_tol")) s.oracle_tol = number(*v, "scenario.oracle_tol");
  if (!(s.oracle_tol > 0.0)) invalid("scenario.oracle_tol", "must be positive");
  return s;
}

AnalysisBlock parse_analysis(const json& j) {
  const std::string path = "analysis";
  check_object(j, path, {"K_max", "L_Phi"});
  AnalysisBlock a;
  if (const json* v = find(j, "K_max")) a.K_max = integer(*v, "analysis.K_max");
  if (a.K_max < 1) invalid("analysis.K_max", "must be at least 1");
  const json& src = require(j, "L_Phi", path);
  const std::string sp = "analysis.L_Phi";
  check_object(src, sp, {"source", "value", "trials", "seed"});
  a.L_Phi_source = string(require(src, "source", sp), sp + ".source");
  if (a.L_Phi_source == "config") {
    a.L_Phi = number(require(src, "value", sp), sp + ".value");
    if (!(a.L_Phi > 1.0)) invalid(sp + ".value", "must exceed 1");
    if (find(src, "trials") || find(src, "seed")) invalid(sp, "trials and seed apply to the probe source only");
  } else if (a.L_Phi_source == "probe") {
    if (find(src, "value")) invalid(sp + ".value", "value applies to the config source only");
    if (const json* v = find(src, "trials")) a.probe_trials = integer(*v, sp + ".trials");
    if (a.probe_trials < 1) invalid(sp + ".trials", "must be positive");
    if (const json* v = find(src, "seed")) a.probe_seed = unsigned_integer(*v, sp + ".seed");
  } else {
    invalid(sp + ".source", "must be \"config\" or \"probe\"");
  }
  return a;
}

OutputBlock parse_output(const json& j) {
  check_object(j, "output", {"dir", "csv", "summary", "ledger"});
  OutputBlock o;
  if (const json* v = find(j, "dir")) o.dir = string(*v, "output.dir");
  if (const json* v = find(j, "csv")) o.csv = string(*v, "output.csv");
  if (const json* v = find(j, "summary")) o.summary = string(*v, "output.summary");
  if (const json* v = find(j, "ledger")) o.ledger = string(*v, "output.ledger");
  return o;
}

}  // namespace

ConfigDocument parse_config(const json& j) {
  check_object(j, "", {"schema_version", "system", "certificate", "controller", "mhe", "scenario",
                       "analysis", "output"});
  const int version = integer(require(j, "schema_version", ""), "schema_version");
  if (version != kSchemaVersion)
    invalid("schema_version", "unsupported version " + std::to_string(version));
  ConfigDocument doc;
  doc.system = parse_system(require(j, "system", ""));
  doc.certificate = parse_certificate(require(j, "certificate", ""), doc.system);
  doc.controller = parse_controller(require(j, "controller", ""), doc.system);
  doc.mhe = parse_mhe(require(j, "mhe", ""));
  doc.scenario = parse_scenario(require(j, "scenario", ""), doc.system);
  doc.analysis = parse_analysis(require(j, "analysis", ""));
  if (const json* v = find(j, "output")) doc.output = parse_output(*v);
  return doc;
}

ConfigDocument parse_config_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(error_kind::kParseError, std::string("malformed JSON: ") + e.what());
  }
  return parse_config(j);
}

ConfigDocument load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(error_kind::kParseError, "cannot open config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

json to_json(const ConfigDocument& doc) {
  const LtiSystem& s = doc.system;
  json j;
  j["schema_version"] = kSchemaVersion;
  j["system"] = {{"A", matrix_json(s.A)},          {"B", matrix_json(s.B)},
                 {"C", matrix_json(s.C)},          {"x_box", box_json(s.x_box)},
                 {"u_box", box_json(s.u_box)},     {"y_box", box_json(s.y_box)},
                 {"w1_box", box_json(s.w1_box)},   {"w2_box", box_json(s.w2_box)}};
  const CertificateBlock& c = doc.certificate;
  j["certificate"] = {{"P", c.P ? matrix_json(*c.P) : json("search")},
                      {"Q", matrix_json(c.Q)},
                      {"R", matrix_json(c.R)},
                      {"eta", c.eta},
                      {"tol", c.tol},
                      {"search_budget", c.search_budget}};
  json ctrl = {{"gain", doc.controller.gain ? matrix_json(*doc.controller.gain) : json("lqr")}};
  if (doc.controller.L_pi) ctrl["L_pi"] = *doc.controller.L_pi;
  if (doc.controller.gamma13_slope) ctrl["gamma13_slope"] = *doc.controller.gamma13_slope;
  j["controller"] = ctrl;
  json mhe = {{"M", doc.mhe.M}, {"K", doc.mhe.K ? json(*doc.mhe.K) : json("auto")}};
  if (doc.mhe.phi_base) mhe["phi_base"] = *doc.mhe.phi_base;
  j["mhe"] = mhe;
  const ScenarioBlock& sc = doc.scenario;
  j["scenario"] = {{"x0", vector_json(sc.x0)},
                   {"prior", vector_json(sc.prior)},
                   {"z0", vector_json(sc.z0 ? *sc.z0 : sc.prior)},
                   {"steps", sc.steps},
                   {"seed", sc.seed},
                   {"w1_box", box_json(sc.w1_box)},
                   {"w2_box", box_json(sc.w2_box)},
                   {"oracle", sc.oracle},
                   {"oracle_tol", sc.oracle_tol}};
  const AnalysisBlock& a = doc.analysis;
  json lphi = {{"source", a.L_Phi_source}};
  if (a.L_Phi_source == "config") {
    lphi["value"] = a.L_Phi;
  } else {
    lphi["trials"] = a.probe_trials;
    lphi["seed"] = a.probe_seed;
  }
  j["analysis"] = {{"K_max", a.K_max}, {"L_Phi", lphi}};
  j["output"] = {{"dir", doc.output.dir},
                 {"csv", doc.output.csv},
                 {"summary", doc.output.summary},
                 {"ledger", doc.output.ledger}};
  return j;
}

std::string config_hash(const ConfigDocument& doc) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : to_json(doc).dump()) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace submhe
