#include "avae/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include "avae/errors.hpp"

namespace avae {

namespace {

struct Field {
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* first = text.data();
  const char* last = first + text.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last)
    throw ConfigError("invalid value '" + text + "' for key '" + key + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw ConfigError("invalid value '" + text + "' for key '" + key + "' (expected true or false)");
}

std::string bool_str(bool b) { return b ? "true" : "false"; }

#define AVAE_SIZE(F) \
  Field { #F, [](const RunConfig& c) { return std::to_string(c.F); }, \
          [](RunConfig& c, const std::string& v) { c.F = parse_number<std::size_t>(#F, v); } }
#define AVAE_REAL(F) \
  Field { #F, [](const RunConfig& c) { return format_double(c.F); }, \
          [](RunConfig& c, const std::string& v) { c.F = parse_number<double>(#F, v); } }
#define AVAE_BOOL(F) \
  Field { #F, [](const RunConfig& c) { return bool_str(c.F); }, \
          [](RunConfig& c, const std::string& v) { c.F = parse_bool(#F, v); } }
#define AVAE_TEXT(F) \
  Field { #F, [](const RunConfig& c) { return c.F; }, [](RunConfig& c, const std::string& v) { c.F = v; } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      AVAE_SIZE(epochs),
      AVAE_SIZE(batch_size),
      AVAE_REAL(lr_vae),
      AVAE_REAL(lr_disc),
      AVAE_REAL(w1),
      AVAE_REAL(w2),
      AVAE_REAL(lambda_adv),
      AVAE_REAL(gamma),
      AVAE_SIZE(latent_dim),
      AVAE_SIZE(disc_hidden),
      AVAE_SIZE(conv1_filters),
      AVAE_SIZE(conv2_filters),
      Field{"mode", [](const RunConfig& c) { return to_string(c.mode); },
            [](RunConfig& c, const std::string& v) { c.mode = parse_data_mode(v); }},
      Field{"ablation", [](const RunConfig& c) { return to_string(c.ablation); },
            [](RunConfig& c, const std::string& v) { c.ablation = parse_ablation(v); }},
      Field{"seed", [](const RunConfig& c) { return std::to_string(c.seed); },
            [](RunConfig& c, const std::string& v) { c.seed = parse_number<std::uint64_t>("seed", v); }},
      AVAE_BOOL(labelled_in_unsup),
      AVAE_BOOL(real_branch_grad),
      Field{"mask", [](const RunConfig& c) { return std::string(c.mask == MaskMode::stratified ? "stratified" : "uniform"); },
            [](RunConfig& c, const std::string& v) {
              if (v == "stratified") c.mask = MaskMode::stratified;
              else if (v == "uniform") c.mask = MaskMode::uniform;
              else throw ConfigError("invalid value '" + v + "' for key 'mask' (expected stratified or uniform)");
            }},
      AVAE_SIZE(knn_k),
      AVAE_SIZE(checkpoint_every),
      AVAE_BOOL(early_stopping),
      AVAE_SIZE(patience),
      AVAE_TEXT(data),
      AVAE_TEXT(out),
  };
  return table;
}

#undef AVAE_SIZE
#undef AVAE_REAL
#undef AVAE_BOOL
#undef AVAE_TEXT

const std::set<std::string>& unhashed_keys() {
  static const std::set<std::string> keys = {"epochs", "data", "out", "checkpoint_every"};
  return keys;
}

const Field& find_field(const std::string& key) {
  for (const Field& f : fields())
    if (key == f.name) return f;
  std::string valid;
  for (const Field& f : fields()) valid += std::string(valid.empty() ? "" : ", ") + f.name;
  throw ConfigError("unknown config key '" + key + "'; valid keys: " + valid);
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

void RunConfig::set(const std::string& key, const std::string& value) { find_field(key).set(*this, value); }

std::string RunConfig::get(const std::string& key) const { return find_field(key).get(*this); }

std::map<std::string, std::string> RunConfig::values() const {
  std::map<std::string, std::string> out;
  for (const Field& f : fields()) out[f.name] = f.get(*this);
  return out;
}

std::vector<std::string> RunConfig::keys() {
  std::vector<std::string> out;
  for (const Field& f : fields()) out.emplace_back(f.name);
  return out;
}

void RunConfig::validate() const {
  auto fail = [](const std::string& msg) { throw ConfigError(msg); };
  if (epochs < 1) fail("epochs must be at least 1");
  if (batch_size < 1) fail("batch_size must be at least 1");
  if (!(lr_vae > 0.0)) fail("lr_vae must be positive");
  if (!(lr_disc > 0.0)) fail("lr_disc must be positive");
  if (!(gamma > 0.0 && gamma <= 1.0)) fail("gamma must lie in (0, 1], got " + format_double(gamma));
  if (!(w1 >= 0.0) || !(w2 >= 0.0)) fail("w1 and w2 must be non-negative");
  if (!(lambda_adv >= 0.0)) fail("lambda_adv must be non-negative");
  if (knn_k < 1) fail("knn_k must be at least 1");
  if (conv1_filters < 1 || conv2_filters < 1) fail("filter counts must be positive");
  if (early_stopping && patience < 1) fail("patience must be at least 1");
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const Field& f : fields()) out += std::string(f.name) + " = " + f.get(*this) + "\n";
  return out;
}

std::string RunConfig::hash() const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const Field& f : fields()) {
    if (unhashed_keys().count(f.name)) continue;
    for (char c : std::string(f.name) + "=" + f.get(*this) + "\n") {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": expected 'key = value'");
    try {
      cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path.string());
}

void save_config(const std::filesystem::path& path, const RunConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write config " + path.string());
  out << cfg.to_text();
  if (!out) throw IoError("failed writing config " + path.string());
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments) {
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + a + "' is not of the form key=value");
    cfg.set(trim(a.substr(0, eq)), trim(a.substr(eq + 1)));
  }
}

std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> out;
  const auto va = a.values(), vb = b.values();
  for (const Field& f : fields())
    if (va.at(f.name) != vb.at(f.name)) out.push_back(std::string(f.name) + ": " + va.at(f.name) + " -> " + vb.at(f.name));
  return out;
}

}  // namespace avae
