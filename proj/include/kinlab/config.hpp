#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace kinlab::config {

// Minimal TOML subset: [section] tables, key = value with strings, numbers,
// booleans, and flat arrays of numbers or strings. Comments start with '#'.
struct TomlValue {
  enum class Type { String, Number, Bool, NumberArray, StringArray } type = Type::String;
  std::string s;
  double num = 0.0;
  bool b = false;
  std::vector<double> nums;
  std::vector<std::string> strs;
};

// Keys are "section.key" (or "key" before any table header).
std::map<std::string, TomlValue> parse_toml(const std::string& text);

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

struct RunConfig {
  std::string subcommand;
  std::string out_dir = "out";
  int workers = 0;  // 0 = all hardware threads
  std::uint64_t seed = 12345;

  // [geometry]
  std::string geometry = "disk";  // disk | annulus | ball
  double radius = 1.0;
  double inner_radius = 0.5;

  // [milne]
  std::vector<double> epsilon;  // one or more values
  double R1 = 0.0, R2 = 0.0;    // 0 = derive from geometry
  bool geometric = true;
  std::string measure = "s2";  // s2 | s1
  int n_eta = 200, n_phi = 64, n_psi = 8;
  double L_exponent = 0.5;
  double tol = 1e-8;
  int max_iter = 500;

  // [data]
  std::string profile = "constant";  // constant | ramp | grazing-bump | sin-phi
  double c0 = 1.0;
  double amplitude = 0.0;
  double width = 0.25;
  int mode_k = 0;
  double mode_amplitude = 0.0;
  double phase = 0.0;

  // [transport]
  std::string mode = "full";  // full | modal | ball-axi
  int n_r = 64, n_theta = 64, n_alpha = 64;
  bool unsteady = false;
  double T = 0.0;   // 0 = auto
  double dt0 = 0.0;

  // [expand] / [converge]
  int order = 0;
  double alpha = 1.0;
  bool flat = false;
  bool flat_pair = true;
  int boundary_nodes = 16;
  double collar_factor = 10.0;
  int ref_nr_core = 64;
  int ref_nalpha = 128;
  int milne_n_eta = 0;
  int milne_n_phi = 96;
  std::string cache_dir;  // layer-stack cache; empty = off
};

// Parse + validate; throws ConfigError naming the offending field.
RunConfig load_config(const std::string& path);
RunConfig config_from_toml_text(const std::string& text);

// Serialization used for round-trip checks and the run manifest.
std::string to_toml(const RunConfig& c);
std::string to_json(const RunConfig& c);

// KINLAB_* environment overrides (KINLAB_WORKERS, KINLAB_OUT, KINLAB_SEED).
void apply_env_overrides(RunConfig& c);

}  // namespace kinlab::config
