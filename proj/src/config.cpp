#include "kinlab/config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>

#include "kinlab/io.hpp"
#include "json.hpp"

namespace kinlab::config {

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

// Strip a trailing comment that is not inside a string literal.
std::string strip_comment(const std::string& s) {
  bool instr = false;
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '"') instr = !instr;
    if (s[i] == '#' && !instr) return s.substr(0, i);
  }
  return s;
}

TomlValue parse_scalar(const std::string& tok, const std::string& key) {
  TomlValue v;
  if (tok.size() >= 2 && tok.front() == '"' && tok.back() == '"') {
    v.type = TomlValue::Type::String;
    v.s = tok.substr(1, tok.size() - 2);
    return v;
  }
  if (tok == "true" || tok == "false") {
    v.type = TomlValue::Type::Bool;
    v.b = tok == "true";
    return v;
  }
  char* end = nullptr;
  double num = std::strtod(tok.c_str(), &end);
  if (end == tok.c_str() || *end != '\0')
    throw ConfigError("config: cannot parse value for '" + key + "': " + tok);
  v.type = TomlValue::Type::Number;
  v.num = num;
  return v;
}

}  // namespace

std::map<std::string, TomlValue> parse_toml(const std::string& text) {
  std::map<std::string, TomlValue> out;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(strip_comment(line));
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config: bad table header at line " + std::to_string(lineno));
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: expected key = value at line " + std::to_string(lineno));
    std::string key = trim(line.substr(0, eq));
    std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw ConfigError("config: empty key or value at line " + std::to_string(lineno));
    std::string full = section.empty() ? key : section + "." + key;
    if (val.front() == '[') {
      if (val.back() != ']')
        throw ConfigError("config: unterminated array for '" + full + "'");
      std::string body = val.substr(1, val.size() - 2);
      TomlValue arr;
      arr.type = TomlValue::Type::NumberArray;
      bool strings = body.find('"') != std::string::npos;
      if (strings) arr.type = TomlValue::Type::StringArray;
      std::string tok;
      std::istringstream items(body);
      while (std::getline(items, tok, ',')) {
        tok = trim(tok);
        if (tok.empty()) continue;
        TomlValue sv = parse_scalar(tok, full);
        if (strings)
          arr.strs.push_back(sv.s);
        else
          arr.nums.push_back(sv.num);
      }
      out[full] = arr;
    } else {
      out[full] = parse_scalar(val, full);
    }
  }
  return out;
}

namespace {

struct Reader {
  const std::map<std::string, TomlValue>& kv;
  std::vector<std::string> seen;

  const TomlValue* find(const std::string& key) {
    auto it = kv.find(key);
    if (it == kv.end()) return nullptr;
    seen.push_back(key);
    return &it->second;
  }
  void num(const std::string& key, double* dst) {
    if (const TomlValue* v = find(key)) {
      if (v->type != TomlValue::Type::Number) throw ConfigError("config: '" + key + "' must be a number");
      *dst = v->num;
    }
  }
  void integer(const std::string& key, int* dst) {
    double d = *dst;
    num(key, &d);
    *dst = (int)std::llround(d);
  }
  void u64(const std::string& key, std::uint64_t* dst) {
    double d = (double)*dst;
    num(key, &d);
    *dst = (std::uint64_t)std::llround(d);
  }
  void boolean(const std::string& key, bool* dst) {
    if (const TomlValue* v = find(key)) {
      if (v->type != TomlValue::Type::Bool) throw ConfigError("config: '" + key + "' must be a boolean");
      *dst = v->b;
    }
  }
  void str(const std::string& key, std::string* dst) {
    if (const TomlValue* v = find(key)) {
      if (v->type != TomlValue::Type::String) throw ConfigError("config: '" + key + "' must be a string");
      *dst = v->s;
    }
  }
  void numbers(const std::string& key, std::vector<double>* dst) {
    if (const TomlValue* v = find(key)) {
      if (v->type == TomlValue::Type::Number)
        *dst = {v->num};
      else if (v->type == TomlValue::Type::NumberArray)
        *dst = v->nums;
      else
        throw ConfigError("config: '" + key + "' must be a number or array");
    }
  }
};

}  // namespace

RunConfig config_from_toml_text(const std::string& text) {
  std::map<std::string, TomlValue> kv = parse_toml(text);
  RunConfig c;
  Reader r{kv, {}};
  r.str("run.subcommand", &c.subcommand);
  r.str("run.out_dir", &c.out_dir);
  r.integer("run.workers", &c.workers);
  r.u64("run.seed", &c.seed);

  r.str("geometry.kind", &c.geometry);
  r.num("geometry.radius", &c.radius);
  r.num("geometry.inner_radius", &c.inner_radius);

  r.numbers("milne.epsilon", &c.epsilon);
  r.num("milne.R1", &c.R1);
  r.num("milne.R2", &c.R2);
  r.boolean("milne.geometric", &c.geometric);
  r.str("milne.measure", &c.measure);
  r.integer("milne.n_eta", &c.n_eta);
  r.integer("milne.n_phi", &c.n_phi);
  r.integer("milne.n_psi", &c.n_psi);
  r.num("milne.L_exponent", &c.L_exponent);
  r.num("milne.tol", &c.tol);
  r.integer("milne.max_iter", &c.max_iter);

  r.str("data.profile", &c.profile);
  r.num("data.c0", &c.c0);
  r.num("data.amplitude", &c.amplitude);
  r.num("data.width", &c.width);
  r.integer("data.mode_k", &c.mode_k);
  r.num("data.mode_amplitude", &c.mode_amplitude);
  r.num("data.phase", &c.phase);

  r.str("transport.mode", &c.mode);
  r.integer("transport.n_r", &c.n_r);
  r.integer("transport.n_theta", &c.n_theta);
  r.integer("transport.n_alpha", &c.n_alpha);
  r.boolean("transport.unsteady", &c.unsteady);
  r.num("transport.T", &c.T);
  r.num("transport.dt0", &c.dt0);

  r.integer("expand.order", &c.order);
  r.num("expand.alpha", &c.alpha);
  r.boolean("expand.flat", &c.flat);
  r.boolean("expand.flat_pair", &c.flat_pair);
  r.integer("expand.boundary_nodes", &c.boundary_nodes);
  r.num("expand.collar_factor", &c.collar_factor);
  r.integer("expand.ref_nr_core", &c.ref_nr_core);
  r.integer("expand.ref_nalpha", &c.ref_nalpha);
  r.integer("expand.milne_n_eta", &c.milne_n_eta);
  r.integer("expand.milne_n_phi", &c.milne_n_phi);
  r.str("expand.cache_dir", &c.cache_dir);

  for (const auto& [key, value] : kv) {
    (void)value;
    if (std::find(r.seen.begin(), r.seen.end(), key) == r.seen.end())
      throw ConfigError("config: unknown key '" + key + "'");
  }

  // Validation with field names in the message.
  if (c.geometry != "disk" && c.geometry != "annulus" && c.geometry != "ball")
    throw ConfigError("config: geometry.kind must be disk, annulus, or ball");
  if (!(c.radius > 0.0)) throw ConfigError("config: geometry.radius must be positive");
  if (c.geometry == "annulus" && !(c.inner_radius > 0.0 && c.inner_radius < c.radius))
    throw ConfigError("config: geometry.inner_radius must satisfy 0 < inner_radius < radius");
  for (double e : c.epsilon)
    if (!(e > 0.0) || e >= 1.0) throw ConfigError("config: milne.epsilon values must be in (0,1)");
  if (c.measure != "s1" && c.measure != "s2")
    throw ConfigError("config: milne.measure must be s1 or s2");
  if (!(c.tol > 0.0)) throw ConfigError("config: milne.tol must be positive");
  if (!(c.L_exponent > 0.0) || c.L_exponent > 0.5)
    throw ConfigError("config: milne.L_exponent must be in (0, 0.5]");
  if (!(c.alpha > 0.0) || c.alpha > 1.0)
    throw ConfigError("config: expand.alpha must be in (0, 1]");
  if (c.order < 0 || c.order > 1) throw ConfigError("config: expand.order must be 0 or 1");
  return c;
}

RunConfig load_config(const std::string& path) {
  return config_from_toml_text(io::read_text_file(path));
}

void apply_env_overrides(RunConfig& c) {
  if (const char* v = std::getenv("KINLAB_WORKERS")) c.workers = std::atoi(v);
  if (const char* v = std::getenv("KINLAB_OUT")) c.out_dir = v;
  if (const char* v = std::getenv("KINLAB_SEED")) c.seed = std::strtoull(v, nullptr, 10);
}

std::string to_toml(const RunConfig& c) {
  std::ostringstream o;
  auto d = [](double v) { return io::format_double(v); };
  o << "[run]\n";
  o << "subcommand = \"" << c.subcommand << "\"\n";
  o << "out_dir = \"" << c.out_dir << "\"\n";
  o << "workers = " << c.workers << "\n";
  o << "seed = " << c.seed << "\n";
  o << "[geometry]\n";
  o << "kind = \"" << c.geometry << "\"\n";
  o << "radius = " << d(c.radius) << "\n";
  o << "inner_radius = " << d(c.inner_radius) << "\n";
  o << "[milne]\n";
  o << "epsilon = [";
  for (size_t i = 0; i < c.epsilon.size(); ++i) o << (i ? ", " : "") << d(c.epsilon[i]);
  o << "]\n";
  o << "R1 = " << d(c.R1) << "\n";
  o << "R2 = " << d(c.R2) << "\n";
  o << "geometric = " << (c.geometric ? "true" : "false") << "\n";
  o << "measure = \"" << c.measure << "\"\n";
  o << "n_eta = " << c.n_eta << "\n";
  o << "n_phi = " << c.n_phi << "\n";
  o << "n_psi = " << c.n_psi << "\n";
  o << "L_exponent = " << d(c.L_exponent) << "\n";
  o << "tol = " << d(c.tol) << "\n";
  o << "max_iter = " << c.max_iter << "\n";
  o << "[data]\n";
  o << "profile = \"" << c.profile << "\"\n";
  o << "c0 = " << d(c.c0) << "\n";
  o << "amplitude = " << d(c.amplitude) << "\n";
  o << "width = " << d(c.width) << "\n";
  o << "mode_k = " << c.mode_k << "\n";
  o << "mode_amplitude = " << d(c.mode_amplitude) << "\n";
  o << "phase = " << d(c.phase) << "\n";
  o << "[transport]\n";
  o << "mode = \"" << c.mode << "\"\n";
  o << "n_r = " << c.n_r << "\n";
  o << "n_theta = " << c.n_theta << "\n";
  o << "n_alpha = " << c.n_alpha << "\n";
  o << "unsteady = " << (c.unsteady ? "true" : "false") << "\n";
  o << "T = " << d(c.T) << "\n";
  o << "dt0 = " << d(c.dt0) << "\n";
  o << "[expand]\n";
  o << "order = " << c.order << "\n";
  o << "alpha = " << d(c.alpha) << "\n";
  o << "flat = " << (c.flat ? "true" : "false") << "\n";
  o << "flat_pair = " << (c.flat_pair ? "true" : "false") << "\n";
  o << "boundary_nodes = " << c.boundary_nodes << "\n";
  o << "collar_factor = " << d(c.collar_factor) << "\n";
  o << "ref_nr_core = " << c.ref_nr_core << "\n";
  o << "ref_nalpha = " << c.ref_nalpha << "\n";
  o << "milne_n_eta = " << c.milne_n_eta << "\n";
  o << "milne_n_phi = " << c.milne_n_phi << "\n";
  o << "cache_dir = \"" << c.cache_dir << "\"\n";
  return o.str();
}

std::string to_json(const RunConfig& c) {
  nlohmann::json j;
  j["run"] = {{"subcommand", c.subcommand}, {"out_dir", c.out_dir}, {"workers", c.workers},
              {"seed", c.seed}};
  j["geometry"] = {{"kind", c.geometry}, {"radius", c.radius}, {"inner_radius", c.inner_radius}};
  j["milne"] = {{"epsilon", c.epsilon}, {"R1", c.R1},       {"R2", c.R2},
                {"geometric", c.geometric}, {"measure", c.measure}, {"n_eta", c.n_eta},
                {"n_phi", c.n_phi},     {"n_psi", c.n_psi}, {"L_exponent", c.L_exponent},
                {"tol", c.tol},         {"max_iter", c.max_iter}};
  j["data"] = {{"profile", c.profile}, {"c0", c.c0},       {"amplitude", c.amplitude},
               {"width", c.width},     {"mode_k", c.mode_k}, {"mode_amplitude", c.mode_amplitude},
               {"phase", c.phase}};
  j["transport"] = {{"mode", c.mode}, {"n_r", c.n_r},  {"n_theta", c.n_theta},
                    {"n_alpha", c.n_alpha}, {"unsteady", c.unsteady}, {"T", c.T},
                    {"dt0", c.dt0}};
  j["expand"] = {{"order", c.order},
                 {"alpha", c.alpha},
                 {"flat", c.flat},
                 {"flat_pair", c.flat_pair},
                 {"boundary_nodes", c.boundary_nodes},
                 {"collar_factor", c.collar_factor},
                 {"ref_nr_core", c.ref_nr_core},
                 {"ref_nalpha", c.ref_nalpha},
                 {"milne_n_eta", c.milne_n_eta},
                 {"milne_n_phi", c.milne_n_phi},
                 {"cache_dir", c.cache_dir}};
  return j.dump(2);
}

}  // namespace kinlab::config
