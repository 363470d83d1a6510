// SPDX-License-Identifier: Apache-2.0
#include "maskfill/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include <json.hpp>

#include "maskfill/image_io.hpp"

namespace maskfill {
namespace {

std::string trim(const std::string &s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos)
    return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Shortest text that parses back to the same value.
template <typename F> std::string format_exact(F v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double to_double(const std::string &key, const std::string &value) {
  try {
    std::size_t used = 0;
    const double v = std::stod(value, &used);
    if (used == value.size())
      return v;
  } catch (const std::exception &) {
  }
  throw ConfigError("config key '" + key + "': '" + value + "' is not a number");
}

std::uint64_t to_unsigned(const std::string &key, const std::string &value) {
  try {
    std::size_t used = 0;
    if (!value.empty() && value[0] != '-') {
      const unsigned long long v = std::stoull(value, &used);
      if (used == value.size())
        return v;
    }
  } catch (const std::exception &) {
  }
  throw ConfigError("config key '" + key + "': '" + value + "' is not a non-negative integer");
}

bool to_bool(const std::string &key, const std::string &value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on")
    return true;
  if (value == "false" || value == "0" || value == "no" || value == "off")
    return false;
  throw ConfigError("config key '" + key + "': '" + value + "' is not a boolean");
}

std::string read_file(const std::filesystem::path &path) {
  std::ifstream file(path, std::ios::binary);
  if (!file)
    throw IoError(path.string() + ": cannot open");
  return std::string((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
}

} // namespace

ConfigMap parse_config_text(const std::string &text) {
  ConfigMap map;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.resize(hash);
    line = trim(line);
    if (line.empty())
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    map[key] = trim(line.substr(eq + 1));
  }
  return map;
}

std::string format_config_text(const ConfigMap &map) {
  std::string out;
  for (const auto &[key, value] : map)
    out += key + " = " + value + "\n";
  return out;
}

ConfigMap read_config_file(const std::filesystem::path &path) {
  const std::string text = read_file(path);
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception &e) {
      throw ConfigError(path.string() + ": invalid JSON manifest: " + e.what());
    }
    if (!doc.contains("config") || !doc["config"].is_object())
      throw ConfigError(path.string() + ": manifest has no config object");
    ConfigMap map;
    for (const auto &[key, value] : doc["config"].items())
      map[key] = value.is_string() ? value.get<std::string>() : value.dump();
    return map;
  }
  return parse_config_text(text);
}

std::vector<std::string> preset_names() {
  return {"synthetic-default", "synthetic-faster", "real-default", "real-sidd"};
}

DenoiseConfig preset_config(const std::string &name) {
  DenoiseConfig c;
  c.lr = 2e-3;
  if (name == "synthetic-default") {
    c.mask_ratio = 0.3;
    c.beta = 0.99;
    c.iterations = 1000;
    c.pd_factor = 1;
  } else if (name == "synthetic-faster") {
    c.mask_ratio = 0.3;
    c.beta = 0.9;
    c.iterations = 200;
    c.pd_factor = 1;
  } else if (name == "real-default") {
    c.mask_ratio = 0.85;
    c.shared_channels = true;
    c.beta = 0.99;
    c.iterations = 1000;
    c.pd_factor = 2;
  } else if (name == "real-sidd") {
    c.mask_ratio = 0.9;
    c.shared_channels = true;
    c.beta = 0.99;
    c.iterations = 800;
    c.pd_factor = 2;
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  return c;
}

DenoiseConfig denoise_config_from_map(const ConfigMap &map) {
  const auto preset = map.find("preset");
  DenoiseConfig c = preset_config(preset == map.end() ? "synthetic-default" : preset->second);
  for (const auto &[key, value] : map) {
    if (key == "preset")
      continue;
    else if (key == "mask_ratio")
      c.mask_ratio = to_double(key, value);
    else if (key == "beta")
      c.beta = to_double(key, value);
    else if (key == "iters")
      c.iterations = to_unsigned(key, value);
    else if (key == "lr")
      c.lr = to_double(key, value);
    else if (key == "pd")
      c.pd_factor = to_unsigned(key, value);
    else if (key == "ensemble")
      c.ensemble = parse_ensemble(value);
    else if (key == "mask_loss")
      c.mask_loss = to_bool(key, value);
    else if (key == "shared_channels")
      c.shared_channels = to_bool(key, value);
    else if (key == "weights")
      c.init_weights = value;
    else if (key == "seed")
      c.seed = to_unsigned(key, value);
    else if (key == "plateau_window")
      c.plateau.window = to_unsigned(key, value);
    else if (key == "plateau_threshold")
      c.plateau.threshold = to_double(key, value);
    else if (key == "in_channels")
      c.model.in_channels = static_cast<std::uint32_t>(to_unsigned(key, value));
    else if (key == "depth")
      c.model.depth = static_cast<std::uint32_t>(to_unsigned(key, value));
    else if (key == "base_channels")
      c.model.base_channels = static_cast<std::uint32_t>(to_unsigned(key, value));
    else if (key == "max_channels")
      c.model.max_channels = static_cast<std::uint32_t>(to_unsigned(key, value));
    else if (key == "skip_connections")
      c.model.skip_connections = to_bool(key, value);
    else if (key == "leaky_slope")
      c.model.leaky_slope = static_cast<float>(to_double(key, value));
    else
      throw ConfigError("unknown config key '" + key + "'");
  }
  c.validate();
  try {
    c.model.validate();
  } catch (const ContractViolation &e) {
    throw ConfigError(e.what());
  }
  return c;
}

ConfigMap denoise_config_to_map(const DenoiseConfig &c) {
  ConfigMap map;
  map["mask_ratio"] = format_exact(c.mask_ratio);
  map["beta"] = format_exact(c.beta);
  map["iters"] = std::to_string(c.iterations);
  map["lr"] = format_exact(c.lr);
  map["pd"] = std::to_string(c.pd_factor);
  map["ensemble"] = format_ensemble(c.ensemble);
  map["mask_loss"] = c.mask_loss ? "true" : "false";
  map["shared_channels"] = c.shared_channels ? "true" : "false";
  map["weights"] = c.init_weights;
  map["seed"] = std::to_string(c.seed);
  map["plateau_window"] = std::to_string(c.plateau.window);
  map["plateau_threshold"] = format_exact(c.plateau.threshold);
  map["in_channels"] = std::to_string(c.model.in_channels);
  map["depth"] = std::to_string(c.model.depth);
  map["base_channels"] = std::to_string(c.model.base_channels);
  map["max_channels"] = std::to_string(c.model.max_channels);
  map["skip_connections"] = c.model.skip_connections ? "true" : "false";
  map["leaky_slope"] = format_exact(c.model.leaky_slope);
  return map;
}

std::string file_digest(const std::filesystem::path &path) {
  const std::string bytes = read_file(path);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string trace_jsonl(const std::vector<TraceRow> &trace) {
  std::string out;
  for (const auto &row : trace) {
    nlohmann::ordered_json j;
    j["t"] = row.t;
    j["loss"] = row.loss;
    j["lr"] = row.lr;
    if (row.psnr)
      j["psnr"] = *row.psnr;
    out += j.dump() + "\n";
  }
  return out;
}

EvalResult run_eval(const std::filesystem::path &clean_dir, const std::filesystem::path &test_dir,
                    bool quantize) {
  std::map<std::string, std::filesystem::path> clean, test;
  for (const auto &p : list_images(clean_dir))
    clean[p.stem().string()] = p;
  for (const auto &p : list_images(test_dir))
    test[p.stem().string()] = p;

  std::map<std::string, std::pair<std::string, std::string>> labels;
  if (const auto csv = test_dir / "noise.csv"; std::filesystem::exists(csv)) {
    std::istringstream in(read_file(csv));
    std::string line;
    std::getline(in, line); // header
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      std::string file, kind, param;
      std::getline(fields, file, ',');
      std::getline(fields, kind, ',');
      std::getline(fields, param, ',');
      labels[std::filesystem::path(file).stem().string()] = {kind, trim(param)};
    }
  }

  EvalResult result;
  for (const auto &[stem, clean_path] : clean) {
    const auto it = test.find(stem);
    if (it == test.end()) {
      result.unmatched.push_back(clean_path.filename().string());
      continue;
    }
    Image a = load_image(clean_path).pixels;
    Image b = load_image(it->second).pixels;
    if (a.dim(1) != b.dim(1))
      b = match_channels(b, a.dim(1));
    if (!a.same_shape(b)) {
      result.unmatched.push_back(it->second.filename().string() + " (shape differs)");
      continue;
    }
    if (quantize) {
      a = quantize8(a);
      b = quantize8(b);
    }
    QualityRow row;
    row.path = it->second.filename().string();
    if (const auto l = labels.find(stem); l != labels.end()) {
      row.noise_kind = l->second.first;
      row.noise_param = l->second.second;
    }
    row.psnr_db = psnr(a, b);
    row.ssim = ssim(a, b);
    result.report.rows.push_back(std::move(row));
  }
  for (const auto &[stem, path] : test)
    if (!clean.count(stem))
      result.unmatched.push_back(path.filename().string());
  return result;
}

} // namespace maskfill
