#include "dynsurf/config.hpp"

#include <fstream>
#include <functional>
#include <sstream>

#include "dynsurf/errors.hpp"

namespace dynsurf {

namespace {

struct FieldBinding {
  std::function<void(PipelineConfig&, const std::string&)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid numeric value for '" + key + "': " + value);
  }
}

int parse_int(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    const int v = std::stoi(value, &pos);
    if (pos != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("invalid integer value for '" + key + "': " + value);
  }
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on") return true;
  if (value == "0" || value == "false" || value == "off") return false;
  throw ConfigError("invalid boolean value for '" + key + "': " + value);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

const std::map<std::string, FieldBinding>& bindings() {
  static const std::map<std::string, FieldBinding> table = [] {
    std::map<std::string, FieldBinding> m;
    auto add_double = [&m](const std::string& key, double PipelineConfig::* field) {
      m[key] = FieldBinding{
          [key, field](PipelineConfig& c, const std::string& v) { c.*field = parse_double(key, v); },
          [field](const PipelineConfig& c) { return format_double(c.*field); }};
    };
    auto add_int = [&m](const std::string& key, int PipelineConfig::* field) {
      m[key] = FieldBinding{
          [key, field](PipelineConfig& c, const std::string& v) { c.*field = parse_int(key, v); },
          [field](const PipelineConfig& c) { return std::to_string(c.*field); }};
    };
    auto add_bool = [&m](const std::string& key, bool PipelineConfig::* field) {
      m[key] = FieldBinding{
          [key, field](PipelineConfig& c, const std::string& v) { c.*field = parse_bool(key, v); },
          [field](const PipelineConfig& c) { return (c.*field) ? "1" : "0"; }};
    };
    add_double("node_sigma", &PipelineConfig::node_sigma);
    add_int("knn_k", &PipelineConfig::knn_k);
    add_int("node_neighbor_k", &PipelineConfig::node_neighbor_k);
    add_double("lambda", &PipelineConfig::lambda);
    add_int("max_gn_iters", &PipelineConfig::max_gn_iters);
    add_double("delta_distance", &PipelineConfig::delta_distance);
    add_double("delta_normal", &PipelineConfig::delta_normal);
    add_double("epsilon", &PipelineConfig::epsilon);
    add_double("delta_stable", &PipelineConfig::delta_stable);
    add_int("t_low_confid", &PipelineConfig::t_low_confid);
    add_int("delta_recent", &PipelineConfig::delta_recent);
    add_double("delta_nn", &PipelineConfig::delta_nn);
    add_int("supersample_factor", &PipelineConfig::supersample_factor);
    add_bool("compressive_check", &PipelineConfig::compressive_check);
    add_double("depth_min", &PipelineConfig::depth_min);
    add_double("depth_max", &PipelineConfig::depth_max);
    add_bool("bilateral_filter", &PipelineConfig::bilateral_filter);
    add_double("bilateral_sigma_space", &PipelineConfig::bilateral_sigma_space);
    add_double("bilateral_sigma_depth", &PipelineConfig::bilateral_sigma_depth);
    add_double("reinit_energy_threshold", &PipelineConfig::reinit_energy_threshold);
    add_int("reinit_append_threshold", &PipelineConfig::reinit_append_threshold);
    add_int("reinit_window", &PipelineConfig::reinit_window);
    add_int("periodic_reinit_interval", &PipelineConfig::periodic_reinit_interval);
    add_double("delta_distance_reinit", &PipelineConfig::delta_distance_reinit);

    m["fx"] = FieldBinding{
        [](PipelineConfig& c, const std::string& v) { c.intrinsics.fx = parse_double("fx", v); },
        [](const PipelineConfig& c) { return format_double(c.intrinsics.fx); }};
    m["fy"] = FieldBinding{
        [](PipelineConfig& c, const std::string& v) { c.intrinsics.fy = parse_double("fy", v); },
        [](const PipelineConfig& c) { return format_double(c.intrinsics.fy); }};
    m["cx"] = FieldBinding{
        [](PipelineConfig& c, const std::string& v) { c.intrinsics.cx = parse_double("cx", v); },
        [](const PipelineConfig& c) { return format_double(c.intrinsics.cx); }};
    m["cy"] = FieldBinding{
        [](PipelineConfig& c, const std::string& v) { c.intrinsics.cy = parse_double("cy", v); },
        [](const PipelineConfig& c) { return format_double(c.intrinsics.cy); }};
    m["width"] = FieldBinding{
        [](PipelineConfig& c, const std::string& v) { c.intrinsics.width = parse_int("width", v); },
        [](const PipelineConfig& c) { return std::to_string(c.intrinsics.width); }};
    m["height"] = FieldBinding{
        [](PipelineConfig& c, const std::string& v) { c.intrinsics.height = parse_int("height", v); },
        [](const PipelineConfig& c) { return std::to_string(c.intrinsics.height); }};
    return m;
  }();
  return table;
}

}  // namespace

void PipelineConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(std::string("config: ") + what);
  };
  require(node_sigma > 0, "node_sigma must be positive");
  require(knn_k >= 1 && knn_k <= kMaxSkinNeighbors, "knn_k out of range");
  require(node_neighbor_k >= 1, "node_neighbor_k must be positive");
  require(lambda >= 0, "lambda must be nonnegative");
  require(max_gn_iters >= 1, "max_gn_iters must be positive");
  require(delta_distance > 0, "delta_distance must be positive");
  require(delta_normal > 0 && delta_normal <= 1, "delta_normal must be in (0,1]");
  require(epsilon > 0 && epsilon < 1, "epsilon must be in (0,1)");
  require(delta_stable > 0, "delta_stable must be positive");
  require(t_low_confid > 0, "t_low_confid must be positive");
  require(delta_recent >= 0, "delta_recent must be nonnegative");
  require(delta_nn > 0, "delta_nn must be positive");
  require(supersample_factor >= 1, "supersample_factor must be >= 1");
  require(depth_min > 0 && depth_max > depth_min, "depth range invalid");
  require(reinit_energy_threshold > 0, "reinit_energy_threshold must be positive");
  require(reinit_append_threshold > 0, "reinit_append_threshold must be positive");
  require(reinit_window >= 1, "reinit_window must be positive");
  require(periodic_reinit_interval >= 0, "periodic_reinit_interval must be >= 0");
  require(delta_distance_reinit > 0, "delta_distance_reinit must be positive");
}

void apply_config_entry(PipelineConfig& cfg, const std::string& key,
                        const std::string& value) {
  const auto& table = bindings();
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError("unknown config key: " + key);
  it->second.set(cfg, value);
}

PipelineConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MissingInput("cannot open config file: " + path);

  PipelineConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    std::istringstream ls(line);
    std::string key;
    if (!(ls >> key)) continue;
    std::string token, value;
    while (ls >> token) {
      if (token == "=") continue;
      if (!value.empty())
        throw ConfigError(path + ":" + std::to_string(line_no) + ": trailing tokens");
      value = token;
    }
    if (value.empty())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": missing value for " + key);
    apply_config_entry(cfg, key, value);
  }
  return cfg;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& [key, binding] : bindings()) keys.push_back(key);
  return keys;
}

void save_config_file(const PipelineConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoFailure("cannot write config file: " + path);
  for (const auto& [key, binding] : bindings()) {
    out << key << " " << binding.get(cfg) << "\n";
  }
  if (!out) throw IoFailure("failed writing config file: " + path);
}

}  // namespace dynsurf
