#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "avae/data.hpp"
#include "avae/vaepp.hpp"

namespace avae {

/// Every knob of a training run. Text form is `key = value` per line with
/// `#` comments; `to_text` always writes every key.
struct RunConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double lr_vae = 1e-5;
  double lr_disc = 1e-4;
  double w1 = 0.9;
  double w2 = 0.1;
  double lambda_adv = 1.0;
  double gamma = 1.0;
  std::size_t latent_dim = 0;   // 0: ceil(M/4) for vectors, 32 for images
  std::size_t disc_hidden = 0;  // 0: ceil(M/4)
  std::size_t conv1_filters = 32;
  std::size_t conv2_filters = 64;
  DataMode mode = DataMode::vector;
  Ablation ablation = Ablation::avae;
  std::uint64_t seed = 0;
  bool labelled_in_unsup = true;
  bool real_branch_grad = false;
  MaskMode mask = MaskMode::stratified;
  std::size_t knn_k = 3;
  std::size_t checkpoint_every = 0;  // 0: only at the end
  bool early_stopping = false;
  std::size_t patience = 20;
  std::string data;  // prepared dataset directory
  std::string out;   // output root

  /// Throws ConfigError naming the valid keys when `key` is unknown, or
  /// the key when `value` does not parse.
  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;
  std::map<std::string, std::string> values() const;
  static std::vector<std::string> keys();

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  std::string to_text() const;
  /// Hash of every key that influences the trained parameters; epochs and
  /// paths are left out so a run can be extended by resuming.
  std::string hash() const;

  friend bool operator==(const RunConfig& a, const RunConfig& b) { return a.values() == b.values(); }
};

RunConfig parse_config_text(const std::string& text, const std::string& origin = "<config>");
RunConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const RunConfig& cfg);

/// Applies `key=value` overrides in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& assignments);

/// Lines `key: a -> b` for every differing key.
std::vector<std::string> config_diff(const RunConfig& a, const RunConfig& b);

/// Text form of a double that parses back to the same value.
std::string format_double(double v);

}  // namespace avae
