#pragma once

// Flat key-value configuration. Files use INI-style sections:
//
//   [train]
//   lr = 5e-4
//
// which becomes the dotted key "train.lr". CLI overrides use the dotted form
// directly (--set train.lr=1e-3). The effective config is serialized into
// every checkpoint and run log so a run is reproducible from its artifacts.

#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace srf {

class KVConfig {
 public:
  KVConfig() = default;

  static KVConfig from_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config file not found: " + path);
    KVConfig cfg;
    std::string line, section;
    size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      std::string s = trim(line);
      if (s.empty() || s[0] == '#' || s[0] == ';') continue;
      if (s.front() == '[' && s.back() == ']') {
        section = trim(s.substr(1, s.size() - 2));
        continue;
      }
      auto eq = s.find('=');
      if (eq == std::string::npos) {
        throw std::runtime_error("config parse error at " + path + ":" + std::to_string(lineno) +
                                 " (expected key = value)");
      }
      std::string key = trim(s.substr(0, eq));
      std::string val = trim(s.substr(eq + 1));
      if (key.empty()) {
        throw std::runtime_error("config parse error at " + path + ":" + std::to_string(lineno) +
                                 " (empty key)");
      }
      cfg.values_[section.empty() ? key : section + "." + key] = val;
    }
    return cfg;
  }

  static KVConfig from_string(const std::string& text) {
    KVConfig cfg;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
      std::string s = trim(line);
      if (s.empty()) continue;
      auto eq = s.find('=');
      if (eq == std::string::npos) throw std::runtime_error("bad config line: " + s);
      cfg.values_[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    return cfg;
  }

  // "section.key=value"
  void set_dotted(const std::string& assignment) {
    auto eq = assignment.find('=');
    if (eq == std::string::npos) {
      throw std::runtime_error("override must look like key=value: " + assignment);
    }
    values_[trim(assignment.substr(0, eq))] = trim(assignment.substr(eq + 1));
  }

  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  bool has(const std::string& key) const { return values_.count(key) != 0; }

  std::string get_str(const std::string& key, const std::string& def) const {
    auto it = values_.find(key);
    return it == values_.end() ? def : it->second;
  }

  double get_double(const std::string& key, double def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      return std::stod(it->second);
    } catch (const std::exception&) {
      throw std::runtime_error("config key " + key + " is not a number: " + it->second);
    }
  }

  long get_int(const std::string& key, long def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    try {
      return std::stol(it->second);
    } catch (const std::exception&) {
      throw std::runtime_error("config key " + key + " is not an integer: " + it->second);
    }
  }

  bool get_bool(const std::string& key, bool def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    if (it->second == "true" || it->second == "1") return true;
    if (it->second == "false" || it->second == "0") return false;
    throw std::runtime_error("config key " + key + " is not a boolean: " + it->second);
  }

  // Comma-separated integer list.
  std::vector<size_t> get_size_list(const std::string& key, std::vector<size_t> def) const {
    auto it = values_.find(key);
    if (it == values_.end()) return def;
    std::vector<size_t> out;
    std::istringstream is(it->second);
    std::string tok;
    while (std::getline(is, tok, ',')) {
      tok = trim(tok);
      if (tok.empty()) continue;
      out.push_back(static_cast<size_t>(std::stoul(tok)));
    }
    if (out.empty()) throw std::runtime_error("config key " + key + " has no entries");
    return out;
  }

  // Sorted dotted-key dump; stable, diff-friendly, parseable by from_string.
  std::string serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << " = " << v << "\n";
    return os.str();
  }

  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  static std::string trim(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
  }

  std::map<std::string, std::string> values_;
};

// Architecture knobs; every checkpoint echoes these so it is self-describing.
struct ModelConfig {
  std::vector<size_t> encoder_channels{8, 16, 16, 32, 32, 64};
  std::vector<size_t> encoder_strides{1, 2, 1, 2, 1, 2};
  size_t encoder_kernel = 3;
  size_t stereo_k = 16;        // neuron bank size K, also the code dimension
  size_t agg_depth = 1;        // aggregation conv layers over the pair axis
  std::vector<size_t> decoder_hidden{128, 128};

  static ModelConfig from_kv(const KVConfig& kv) {
    ModelConfig mc;
    mc.encoder_channels = kv.get_size_list("encoder.channels", mc.encoder_channels);
    mc.encoder_strides = kv.get_size_list("encoder.strides", mc.encoder_strides);
    mc.encoder_kernel = static_cast<size_t>(kv.get_int("encoder.kernel", 3));
    mc.stereo_k = static_cast<size_t>(kv.get_int("stereo.k", 16));
    mc.agg_depth = static_cast<size_t>(kv.get_int("stereo.agg_depth", 1));
    mc.decoder_hidden = kv.get_size_list("decoder.hidden", mc.decoder_hidden);
    if (mc.encoder_channels.size() != mc.encoder_strides.size()) {
      throw std::runtime_error("encoder.channels and encoder.strides must have equal length");
    }
    if (mc.stereo_k == 0 || mc.agg_depth == 0) {
      throw std::runtime_error("stereo.k and stereo.agg_depth must be >= 1");
    }
    return mc;
  }

  void to_kv(KVConfig& kv) const {
    kv.set("encoder.channels", join(encoder_channels));
    kv.set("encoder.strides", join(encoder_strides));
    kv.set("encoder.kernel", std::to_string(encoder_kernel));
    kv.set("stereo.k", std::to_string(stereo_k));
    kv.set("stereo.agg_depth", std::to_string(agg_depth));
    kv.set("decoder.hidden", join(decoder_hidden));
  }

  // Raw RGB plus one slice per CNN layer.
  size_t descriptor_dim() const {
    size_t d = 3;
    for (size_t c : encoder_channels) d += c;
    return d;
  }

  size_t min_image_extent() const {
    size_t s = 1;
    for (size_t st : encoder_strides) s *= st;
    return s;
  }

 private:
  static std::string join(const std::vector<size_t>& v) {
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(v[i]);
    }
    return s;
  }
};

}  // namespace srf
