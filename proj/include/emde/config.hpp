#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "emde/attribution.hpp"
#include "emde/lsh_codec.hpp"
#include "emde/net.hpp"
#include "emde/recommender.hpp"
#include "emde/sketch.hpp"

namespace emde {

// Flat key-value text with sections:
//   # comment
//   [section]            or [section name]
//   key = value
// Keys are unique within a section; values run to the end of the line.
class KeyValueFile {
 public:
  static KeyValueFile parse(const std::string& text, const std::string& origin = "<config>");
  static KeyValueFile load(const std::filesystem::path& path);

  const std::vector<std::string>& sections() const { return order_; }
  bool has(const std::string& section, const std::string& key) const;
  const std::string& get(const std::string& section, const std::string& key) const;
  std::optional<std::string> find(const std::string& section, const std::string& key) const;
  std::vector<std::string> keys(const std::string& section) const;

 private:
  std::string origin_;
  std::vector<std::string> order_;
  std::map<std::string, std::map<std::string, std::string>> values_;
};

struct ModalityConfig {
  ModalitySpec spec;
  std::filesystem::path embeddings;
  std::optional<std::filesystem::path> entity_map;  // absent for identity modalities
};

struct PipelineConfig {
  std::filesystem::path ratings;
  std::filesystem::path workdir;
  std::vector<ModalityConfig> modalities;  // the first one is the output modality

  double like_threshold = kDefaultLikeThreshold;
  std::uint64_t split_seed = 0;
  std::size_t n_train = 0;  // 0: every eligible user left after valid and test
  std::size_t n_valid = 0;
  std::size_t n_test = 0;

  CodecParams codec;

  Eigen::Index hidden = 256;
  int hidden_layers = 3;
  Activation activation = Activation::leaky_relu;
  double leaky_slope = 0.01;
  TrainConfig train;

  AttributionOptions attribution;
  int recommend_n = 20;

  std::vector<ModalitySpec> specs() const;
  void override_seed(std::uint64_t seed);
  // Invariants that do not touch the filesystem.
  void validate() const;
  // Every referenced input file exists.
  void check_paths() const;
};

// Relative paths resolve against the config file's directory.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const KeyValueFile& kv, const std::filesystem::path& base_dir);

Decode parse_decode(std::string_view s);
std::string_view to_string(Decode d);

}  // namespace emde
