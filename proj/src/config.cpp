#include "pdmp_impulse/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace pdmp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& value) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(value, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != value.size()) {
    throw ConfigError("config key '" + key + "': not a number: '" + value + "'");
  }
  return out;
}

long long to_int(const std::string& key, const std::string& value) {
  long long out = 0;
  const auto* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) {
    // Accept integral values written in floating notation, e.g. 1e6.
    const double d = to_double(key, value);
    if (d != static_cast<double>(static_cast<long long>(d))) {
      throw ConfigError("config key '" + key + "': not an integer: '" + value + "'");
    }
    return static_cast<long long>(d);
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "no") return false;
  throw ConfigError("config key '" + key + "': not a boolean: '" + value + "'");
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

void apply_setting(RunConfig& c, const std::string& key, const std::string& value) {
  if (key == "v") {
    c.model.v = to_double(key, value);
  } else if (key == "beta") {
    c.model.beta = to_double(key, value);
  } else if (key == "c0") {
    c.model.c0 = to_double(key, value);
  } else if (key == "alpha") {
    c.model.alpha = to_double(key, value);
  } else if (key == "u") {
    c.model.u = static_cast<int>(to_int(key, value));
  } else if (key == "x0") {
    c.model.x0 = to_double(key, value);
  } else if (key == "N") {
    c.N = static_cast<int>(to_int(key, value));
  } else if (key == "layer_size" || key == "layer_sizes" || key == "K") {
    c.layer_sizes.clear();
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) c.layer_sizes.push_back(static_cast<int>(to_int(key, trim(item))));
    if (c.layer_sizes.empty()) throw ConfigError("config key '" + key + "' is empty");
  } else if (key == "seed") {
    c.seed = static_cast<std::uint64_t>(to_int(key, value));
  } else if (key == "train_paths") {
    c.train_paths = to_int(key, value);
  } else if (key == "est_paths" || key == "estimation_paths") {
    c.estimation_paths = to_int(key, value);
  } else if (key == "pilot_paths") {
    c.pilot_paths = to_int(key, value);
  } else if (key == "p") {
    c.p = to_double(key, value);
  } else if (key == "n_max") {
    c.n_max = static_cast<int>(to_int(key, value));
  } else if (key == "budget_floor") {
    c.budget_floor = to_bool(key, value);
  } else if (key == "control_start") {
    if (value != "pooled" && value != "per_point") {
      throw ConfigError("control_start must be 'pooled' or 'per_point'");
    }
    c.control_start = value;
  } else if (key == "include_k0") {
    c.include_k0 = to_bool(key, value);
  } else if (key == "threads") {
    c.threads = static_cast<int>(to_int(key, value));
  } else if (key == "T" || key == "mc_horizon") {
    c.mc_horizon = to_double(key, value);
  } else if (key == "mc_sims") {
    c.mc_sims = to_int(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

RunConfig parse_config(const std::string& text) {
  RunConfig c;
  std::stringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    apply_setting(c, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  if (c.N < 0) throw ConfigError("N must be nonnegative");
  if (!(c.p >= 1.0)) throw ConfigError("p must be >= 1");
  return c;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string RunConfig::canonical() const {
  std::map<std::string, std::string> kv;
  kv["v"] = fmt(model.v);
  kv["beta"] = fmt(model.beta);
  kv["c0"] = fmt(model.c0);
  kv["alpha"] = fmt(model.alpha);
  kv["u"] = std::to_string(model.u);
  kv["x0"] = fmt(model.x0);
  kv["N"] = std::to_string(N);
  std::string sizes;
  for (std::size_t i = 0; i < layer_sizes.size(); ++i) {
    sizes += (i ? "," : "") + std::to_string(layer_sizes[i]);
  }
  kv["layer_sizes"] = sizes;
  kv["seed"] = std::to_string(seed);
  kv["train_paths"] = std::to_string(train_paths);
  kv["est_paths"] = std::to_string(estimation_paths);
  kv["pilot_paths"] = std::to_string(pilot_paths);
  kv["p"] = fmt(p);
  kv["n_max"] = std::to_string(n_max);
  kv["budget_floor"] = budget_floor ? "true" : "false";
  kv["control_start"] = control_start;
  kv["include_k0"] = include_k0 ? "true" : "false";
  kv["mc_horizon"] = fmt(mc_horizon);
  kv["mc_sims"] = std::to_string(mc_sims);
  // threads is deliberately left out: results do not depend on it.
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

std::uint64_t RunConfig::hash() const { return fnv1a64(canonical()); }

std::string RunConfig::hash_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash()));
  return buf;
}

}  // namespace pdmp
