#include "emde/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "emde/error.hpp"
#include "emde/format.hpp"

namespace emde {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_integer(const std::string& section, const std::string& key, const std::string& v) {
  T out{};
  const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc() || res.ptr != v.data() + v.size())
    throw ConfigError("[" + section + "] " + key + ": expected an integer, got '" + v + "'");
  return out;
}

double parse_real(const std::string& section, const std::string& key, const std::string& v) {
  const auto d = parse_double(v);
  if (!d || !std::isfinite(*d)) throw ConfigError("[" + section + "] " + key + ": expected a number, got '" + v + "'");
  return *d;
}

bool parse_bool(const std::string& section, const std::string& key, const std::string& v) {
  if (v == "true" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "no" || v == "0") return false;
  throw ConfigError("[" + section + "] " + key + ": expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    auto t = trim(item);
    if (!t.empty()) out.push_back(std::move(t));
  }
  return out;
}

void reject_unknown(const KeyValueFile& kv, const std::string& section, std::initializer_list<const char*> allowed) {
  for (const auto& key : kv.keys(section))
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }))
      throw ConfigError("unknown key '" + key + "' in [" + section + "]");
}

}  // namespace

KeyValueFile KeyValueFile::parse(const std::string& text, const std::string& origin) {
  KeyValueFile kv;
  kv.origin_ = origin;
  std::istringstream in(text);
  std::string raw;
  std::string section;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    const auto where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + "unterminated section header");
      std::istringstream words(line.substr(1, line.size() - 2));
      std::string word, name;
      while (words >> word) name += (name.empty() ? "" : " ") + word;
      if (name.empty()) throw ConfigError(where + "empty section name");
      if (kv.values_.contains(name)) throw ConfigError(where + "duplicate section [" + name + "]");
      section = name;
      kv.order_.push_back(section);
      kv.values_[section];
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + "expected key = value");
    if (section.empty()) throw ConfigError(where + "key outside of any section");
    const auto key = trim(std::string_view(line).substr(0, eq));
    const auto value = trim(std::string_view(line).substr(eq + 1));
    if (key.empty()) throw ConfigError(where + "empty key");
    if (!kv.values_[section].emplace(key, value).second)
      throw ConfigError(where + "duplicate key '" + key + "' in [" + section + "]");
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

bool KeyValueFile::has(const std::string& section, const std::string& key) const {
  const auto s = values_.find(section);
  return s != values_.end() && s->second.contains(key);
}

const std::string& KeyValueFile::get(const std::string& section, const std::string& key) const {
  const auto s = values_.find(section);
  if (s == values_.end()) throw ConfigError(origin_ + ": missing section [" + section + "]");
  const auto k = s->second.find(key);
  if (k == s->second.end()) throw ConfigError(origin_ + ": missing key '" + key + "' in [" + section + "]");
  return k->second;
}

std::optional<std::string> KeyValueFile::find(const std::string& section, const std::string& key) const {
  if (!has(section, key)) return std::nullopt;
  return get(section, key);
}

std::vector<std::string> KeyValueFile::keys(const std::string& section) const {
  std::vector<std::string> out;
  if (const auto s = values_.find(section); s != values_.end())
    for (const auto& [k, _] : s->second) out.push_back(k);
  return out;
}

Decode parse_decode(std::string_view s) {
  if (s == "mean-log") return Decode::mean_log;
  if (s == "min-count") return Decode::min_count;
  throw ConfigError("unknown decode '" + std::string(s) + "' (mean-log|min-count)");
}

std::string_view to_string(Decode d) { return d == Decode::mean_log ? "mean-log" : "min-count"; }

std::vector<ModalitySpec> PipelineConfig::specs() const {
  std::vector<ModalitySpec> out;
  for (const auto& m : modalities) out.push_back(m.spec);
  return out;
}

void PipelineConfig::override_seed(std::uint64_t seed) {
  codec.seed = seed;
  split_seed = seed;
  train.seed = seed;
}

void PipelineConfig::validate() const {
  if (modalities.empty()) throw ConfigError("no modalities configured");
  const auto& out = modalities.front().spec;
  if (out.source != HistorySource::liked || out.mapped)
    throw ConfigError("the first modality must be the liked-interaction modality (source = liked, no entity map)");
  std::set<std::string> names;
  for (const auto& m : modalities)
    if (!names.insert(m.spec.name).second) throw ConfigError("modality '" + m.spec.name + "' listed twice");
  codec.validate();
  if (!(like_threshold >= kMinRating && like_threshold <= kMaxRating))
    throw ConfigError("like_threshold outside the rating range");
  if (hidden < 1 || hidden_layers < 0) throw ConfigError("bad network shape");
  if (train.epochs < 0 || train.batch < 1 || !(train.lr >= 0)) throw ConfigError("bad training settings");
  if (attribution.ig_steps < 1) throw ConfigError("ig_steps must be >= 1");
  if (recommend_n < 1) throw ConfigError("recommend n must be >= 1");
}

void PipelineConfig::check_paths() const {
  std::vector<std::filesystem::path> paths{ratings};
  for (const auto& m : modalities) {
    paths.push_back(m.embeddings);
    if (m.entity_map) paths.push_back(*m.entity_map);
  }
  for (const auto& p : paths)
    if (!std::filesystem::exists(p)) throw ConfigError("input file does not exist: " + p.string());
}

PipelineConfig parse_config(const KeyValueFile& kv, const std::filesystem::path& base_dir) {
  const auto resolve = [&](const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  for (const auto& s : kv.sections()) {
    static const std::set<std::string> known{"paths", "data", "codec", "net", "attribution", "recommend", "modalities"};
    if (!known.contains(s) && s.rfind("modality ", 0) != 0) throw ConfigError("unknown section [" + s + "]");
  }

  PipelineConfig cfg;
  reject_unknown(kv, "paths", {"ratings", "workdir"});
  cfg.ratings = resolve(kv.get("paths", "ratings"));
  cfg.workdir = resolve(kv.get("paths", "workdir"));

  reject_unknown(kv, "data", {"like_threshold", "split_seed", "n_train", "n_valid", "n_test"});
  if (auto v = kv.find("data", "like_threshold")) cfg.like_threshold = parse_real("data", "like_threshold", *v);
  if (auto v = kv.find("data", "split_seed")) cfg.split_seed = parse_integer<std::uint64_t>("data", "split_seed", *v);
  if (auto v = kv.find("data", "n_train")) cfg.n_train = parse_integer<std::size_t>("data", "n_train", *v);
  if (auto v = kv.find("data", "n_valid")) cfg.n_valid = parse_integer<std::size_t>("data", "n_valid", *v);
  if (auto v = kv.find("data", "n_test")) cfg.n_test = parse_integer<std::size_t>("data", "n_test", *v);

  reject_unknown(kv, "codec", {"n_sketches", "sketch_dim", "seed"});
  if (auto v = kv.find("codec", "n_sketches")) cfg.codec.n_sketches = parse_integer<int>("codec", "n_sketches", *v);
  if (auto v = kv.find("codec", "sketch_dim")) cfg.codec.sketch_dim = parse_integer<int>("codec", "sketch_dim", *v);
  if (auto v = kv.find("codec", "seed")) cfg.codec.seed = parse_integer<std::uint64_t>("codec", "seed", *v);

  reject_unknown(kv, "net", {"hidden", "hidden_layers", "activation", "leaky_slope", "epochs", "batch", "lr", "seed",
                             "precision"});
  if (auto v = kv.find("net", "hidden")) cfg.hidden = parse_integer<Eigen::Index>("net", "hidden", *v);
  if (auto v = kv.find("net", "hidden_layers")) cfg.hidden_layers = parse_integer<int>("net", "hidden_layers", *v);
  if (auto v = kv.find("net", "activation")) {
    if (*v == "leaky_relu")
      cfg.activation = Activation::leaky_relu;
    else if (*v == "identity")
      cfg.activation = Activation::identity;
    else
      throw ConfigError("[net] activation: expected leaky_relu or identity");
  }
  if (auto v = kv.find("net", "leaky_slope")) cfg.leaky_slope = parse_real("net", "leaky_slope", *v);
  if (auto v = kv.find("net", "epochs")) cfg.train.epochs = parse_integer<int>("net", "epochs", *v);
  if (auto v = kv.find("net", "batch")) cfg.train.batch = parse_integer<int>("net", "batch", *v);
  if (auto v = kv.find("net", "lr")) cfg.train.lr = parse_real("net", "lr", *v);
  if (auto v = kv.find("net", "seed")) cfg.train.seed = parse_integer<std::uint64_t>("net", "seed", *v);
  if (auto v = kv.find("net", "precision")) {
    if (*v == "float64")
      cfg.train.precision = Precision::float64;
    else if (*v == "float32")
      cfg.train.precision = Precision::float32;
    else
      throw ConfigError("[net] precision: expected float64 or float32");
  }

  reject_unknown(kv, "attribution", {"ig_steps", "target", "baseline"});
  if (auto v = kv.find("attribution", "ig_steps"))
    cfg.attribution.ig_steps = parse_integer<int>("attribution", "ig_steps", *v);
  if (auto v = kv.find("attribution", "target")) cfg.attribution.mode = parse_target_mode(*v);
  if (auto v = kv.find("attribution", "baseline"); v && *v != "zero")
    throw ConfigError("[attribution] baseline: only 'zero' is supported");

  reject_unknown(kv, "recommend", {"n", "decode", "exclude_history"});
  if (auto v = kv.find("recommend", "n")) cfg.recommend_n = parse_integer<int>("recommend", "n", *v);
  if (auto v = kv.find("recommend", "decode")) cfg.attribution.decode = parse_decode(*v);
  if (auto v = kv.find("recommend", "exclude_history"))
    cfg.attribution.exclude_history = parse_bool("recommend", "exclude_history", *v);

  reject_unknown(kv, "modalities", {"order"});
  for (const auto& name : split_list(kv.get("modalities", "order"))) {
    const auto section = "modality " + name;
    reject_unknown(kv, section, {"source", "embeddings", "entity_map"});
    ModalityConfig m;
    m.spec.name = name;
    const auto source = kv.find(section, "source").value_or("liked");
    if (source == "liked")
      m.spec.source = HistorySource::liked;
    else if (source == "disliked")
      m.spec.source = HistorySource::disliked;
    else
      throw ConfigError("[" + section + "] source: expected liked or disliked");
    m.embeddings = resolve(kv.get(section, "embeddings"));
    if (auto v = kv.find(section, "entity_map"); v && !v->empty()) {
      m.entity_map = resolve(*v);
      m.spec.mapped = true;
    }
    cfg.modalities.push_back(std::move(m));
  }
  for (const auto& s : kv.sections())
    if (s.rfind("modality ", 0) == 0) {
      const auto name = s.substr(9);
      if (std::none_of(cfg.modalities.begin(), cfg.modalities.end(),
                       [&](const ModalityConfig& m) { return m.spec.name == name; }))
        throw ConfigError("section [" + s + "] is not listed in [modalities] order");
    }
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  const auto kv = KeyValueFile::load(path);
  return parse_config(kv, path.parent_path().empty() ? std::filesystem::path(".") : path.parent_path());
}

}  // namespace emde
