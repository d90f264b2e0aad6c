#pragma once

// Flat "key = value" configuration text. '#' starts a comment; blank lines
// are ignored; keys are unique.

#include "tomp/config.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tomp {

class KeyValues {
 public:
  static KeyValues parse(const std::string& text, const std::string& origin = "<config>") {
    KeyValues kv;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      line = trim(line);
      if (line.empty()) continue;
      const auto eq = line.find('=');
      if (eq == std::string::npos)
        throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = trim(line.substr(0, eq));
      if (key.empty()) throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": empty key");
      if (kv.values_.count(key)) throw std::invalid_argument(origin + ":" + std::to_string(lineno) + ": duplicate key " + key);
      kv.values_[key] = trim(line.substr(eq + 1));
    }
    return kv;
  }

  static KeyValues load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open config file " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return parse(ss.str(), path);
  }

  std::string to_string() const {
    std::string out;
    for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
    return out;
  }

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get_string(const std::string& key, const std::string& fallback) const {
    consumed_.push_back(key);
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
  }

  double get_double(const std::string& key, double fallback) const {
    const auto s = get_string(key, "");
    if (s.empty()) return fallback;
    try {
      std::size_t used = 0;
      const double v = std::stod(s, &used);
      if (used != s.size()) throw std::invalid_argument(s);
      return v;
    } catch (const std::exception&) {
      throw std::invalid_argument("config key " + key + ": not a number: " + s);
    }
  }

  long long get_int(const std::string& key, long long fallback) const {
    const auto s = get_string(key, "");
    if (s.empty()) return fallback;
    long long v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw std::invalid_argument("config key " + key + ": not an integer: " + s);
    return v;
  }

  bool get_bool(const std::string& key, bool fallback) const {
    const auto s = get_string(key, "");
    if (s.empty()) return fallback;
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw std::invalid_argument("config key " + key + ": not a boolean: " + s);
  }

  /// Keys present in the file that no getter asked for.
  std::vector<std::string> unused_keys() const {
    std::vector<std::string> out;
    for (const auto& [k, v] : values_) {
      bool used = false;
      for (const auto& c : consumed_) used = used || c == k;
      if (!used) out.push_back(k);
    }
    return out;
  }

 private:
  static std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
  mutable std::vector<std::string> consumed_;
};

inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

inline ModelConfig model_config_from(const KeyValues& kv) {
  ModelConfig c;
  c.channels = static_cast<int>(kv.get_int("model.channels", c.channels));
  c.score_size = static_cast<int>(kv.get_int("model.score_size", c.score_size));
  c.stride = static_cast<int>(kv.get_int("model.stride", c.stride));
  for (std::size_t i = 0; i < 4; ++i)
    c.backbone_widths[i] = static_cast<int>(kv.get_int("model.backbone_width" + std::to_string(i), c.backbone_widths[i]));
  c.extent_hidden = static_cast<int>(kv.get_int("model.extent_hidden", c.extent_hidden));
  c.head_width = static_cast<int>(kv.get_int("model.head_width", c.head_width));
  c.head_kernel = static_cast<int>(kv.get_int("model.head_kernel", c.head_kernel));
  c.use_fg_embedding = kv.get_bool("model.fg_embedding", c.use_fg_embedding);
  c.use_bg_embedding = kv.get_bool("model.bg_embedding", c.use_bg_embedding);
  c.use_test_embedding = kv.get_bool("model.test_embedding", c.use_test_embedding);
  c.use_extent_encoding = kv.get_bool("model.extent_encoding", c.use_extent_encoding);
  c.sigma_ratio = kv.get_double("model.sigma_ratio", c.sigma_ratio);
  c.search_factor = kv.get_double("model.search_factor", c.search_factor);
  auto& t = c.transformer;
  t.heads = static_cast<int>(kv.get_int("model.heads", t.heads));
  t.ffn_width = static_cast<int>(kv.get_int("model.ffn_width", t.ffn_width));
  t.dropout = kv.get_double("model.dropout", t.dropout);
  t.enc_layers = static_cast<int>(kv.get_int("model.enc_layers", t.enc_layers));
  t.dec_layers = static_cast<int>(kv.get_int("model.dec_layers", t.dec_layers));
  t.shared_query = kv.get_bool("model.shared_query", t.shared_query);
  t.two_queries = kv.get_bool("model.two_queries", t.two_queries);
  c.validate();
  return c;
}

inline void write_model_config(const ModelConfig& c, KeyValues& kv) {
  auto b = [](bool v) { return std::string(v ? "true" : "false"); };
  kv.set("model.channels", std::to_string(c.channels));
  kv.set("model.score_size", std::to_string(c.score_size));
  kv.set("model.stride", std::to_string(c.stride));
  for (std::size_t i = 0; i < 4; ++i) kv.set("model.backbone_width" + std::to_string(i), std::to_string(c.backbone_widths[i]));
  kv.set("model.extent_hidden", std::to_string(c.extent_hidden));
  kv.set("model.head_width", std::to_string(c.head_width));
  kv.set("model.head_kernel", std::to_string(c.head_kernel));
  kv.set("model.fg_embedding", b(c.use_fg_embedding));
  kv.set("model.bg_embedding", b(c.use_bg_embedding));
  kv.set("model.test_embedding", b(c.use_test_embedding));
  kv.set("model.extent_encoding", b(c.use_extent_encoding));
  kv.set("model.sigma_ratio", format_double(c.sigma_ratio));
  kv.set("model.search_factor", format_double(c.search_factor));
  kv.set("model.heads", std::to_string(c.transformer.heads));
  kv.set("model.ffn_width", std::to_string(c.transformer.ffn_width));
  kv.set("model.dropout", format_double(c.transformer.dropout));
  kv.set("model.enc_layers", std::to_string(c.transformer.enc_layers));
  kv.set("model.dec_layers", std::to_string(c.transformer.dec_layers));
  kv.set("model.shared_query", b(c.transformer.shared_query));
  kv.set("model.two_queries", b(c.transformer.two_queries));
}

}  // namespace tomp
